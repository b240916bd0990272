#include "tscs/image.hpp"

#include "tscs/tensor_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

namespace tscs {

ImageParseError::ImageParseError(const std::string &what, std::size_t at)
    : std::runtime_error(fmt::format("{} (byte offset {})", what, at)), offset(at) {}

namespace {

class HeaderReader {
public:
  HeaderReader(const std::vector<std::uint8_t> &bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t offset() const { return pos_; }
  std::size_t last_start() const { return last_start_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_number(const char *field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 32)) throw ImageParseError(fmt::format("{} is too large", field), start);
      ++pos_;
    }
    if (pos_ == start) throw ImageParseError(fmt::format("expected {}", field), start);
    last_start_ = start;
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ImageParseError("expected whitespace before raster", pos_);
    }
    ++pos_;
  }

private:
  const std::vector<std::uint8_t> &bytes_;
  std::size_t pos_;
  std::size_t last_start_ = 0;
};

} // namespace

DenseTensor ImageBuffer::to_tensor() const {
  Shape shape = channels == 1 ? Shape{height, width} : Shape{height, width, channels};
  return DenseTensor(std::move(shape), samples);
}

ImageBuffer ImageBuffer::from_tensor(const DenseTensor &t) {
  ImageBuffer img;
  if (t.order() == 2) {
    img.channels = 1;
  } else if (t.order() == 3 && t.dim(2) == 3) {
    img.channels = 3;
  } else {
    throw ShapeError(fmt::format("cannot store tensor of shape {} as an image", to_string(t.shape())));
  }
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.samples.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) img.samples[i] = std::clamp(t[i], 0.0, 1.0);
  return img;
}

ImageBuffer decode_netpbm(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ImageParseError("not a binary PGM (P5) or PPM (P6) file", 0);
  }
  ImageBuffer img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes, 2);
  img.width = reader.read_number("width");
  if (img.width == 0) throw ImageParseError("image width must be positive", reader.last_start());
  img.height = reader.read_number("height");
  if (img.height == 0) throw ImageParseError("image height must be positive", reader.last_start());
  const std::size_t maxval = reader.read_number("maxval");
  const std::size_t maxval_at = reader.last_start();
  if (maxval != 255) throw ImageParseError(fmt::format("only 8-bit images (maxval 255) are supported, got {}", maxval), maxval_at);
  reader.expect_single_space();

  const std::size_t raster = reader.offset();
  const std::size_t count = img.width * img.height * img.channels;
  if (bytes.size() - raster < count) {
    throw ImageParseError(fmt::format("truncated raster: need {} bytes, have {}", count, bytes.size() - raster),
                          bytes.size());
  }
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) img.samples[i] = static_cast<double>(bytes[raster + i]) / 255.0;
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const ImageBuffer &image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("images must have 1 or 3 channels");
  if (image.samples.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("image sample count does not match its dimensions");
  }
  const auto header = fmt::format("P{}\n{} {}\n255\n", image.channels == 1 ? 5 : 6, image.width, image.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.samples.size());
  for (double v : image.samples) {
    const double scaled = std::floor(v * 255.0 + 0.5);
    out.push_back(static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0)));
  }
  return out;
}

ImageBuffer load_image(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_netpbm(bytes);
}

void save_image(const ImageBuffer &image, const std::filesystem::path &path) {
  const auto bytes = encode_netpbm(image);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

} // namespace tscs
