#include "tscs/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace tscs {

namespace {

template <typename T> void put_le(std::vector<std::uint8_t> &out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T> T get_le(const std::vector<std::uint8_t> &in, std::size_t &offset) {
  if (offset + sizeof(T) > in.size()) {
    throw FormatError(fmt::format("tensor file truncated at byte {}", offset));
  }
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  offset += sizeof(T);
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::vector<std::uint8_t> encode_tensor(const DenseTensor &t) {
  std::vector<std::uint8_t> out(8);
  out.reserve(8 + 4 + 8 * t.order() + 8 * t.size());
  std::memcpy(out.data(), kTensorMagic, 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.order()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.data()) put_le<double>(out, v);
  return out;
}

DenseTensor decode_tensor(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0) {
    throw FormatError("tensor file: bad magic at byte 0");
  }
  std::size_t offset = 8;
  const auto order = get_le<std::uint32_t>(bytes, offset);
  if (order == 0) throw FormatError("tensor file: zero modes at byte 8");
  Shape shape(order);
  std::size_t count = 1;
  for (auto &d : shape) {
    const std::size_t at = offset;
    d = get_le<std::uint64_t>(bytes, offset);
    if (d == 0) throw FormatError(fmt::format("tensor file: zero dimension at byte {}", at));
    count *= d;
  }
  if (bytes.size() - offset != count * sizeof(double)) {
    throw FormatError(fmt::format("tensor file: payload at byte {} holds {} bytes, expected {}", offset,
                                  bytes.size() - offset, count * sizeof(double)));
  }
  std::vector<double> data(count);
  for (auto &v : data) v = get_le<double>(bytes, offset);
  return DenseTensor(std::move(shape), std::move(data));
}

void write_tensor(std::ostream &os, const DenseTensor &t) {
  const auto bytes = encode_tensor(t);
  os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DenseTensor read_tensor(std::istream &is) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

void save_tensor(const std::filesystem::path &path, const DenseTensor &t) {
  const auto bytes = encode_tensor(t);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

DenseTensor load_tensor(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  return read_tensor(is);
}

DenseTensor as_tensor(const DenseMatrix &m) {
  return DenseTensor(Shape{m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

DenseMatrix as_matrix(const DenseTensor &t) {
  if (t.order() != 2) throw ShapeError(fmt::format("expected a 2-mode tensor, got shape {}", to_string(t.shape())));
  return DenseMatrix(t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end()));
}

void write_file_atomic(const std::filesystem::path &path, const std::string &contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw std::runtime_error(fmt::format("write failed for {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::string base64_encode(const std::vector<std::uint8_t> &bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += kBase64Alphabet[(v >> 6) & 63];
    out += kBase64Alphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kBase64Alphabet[(v >> 18) & 63];
    out += kBase64Alphabet[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kBase64Alphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string &text) {
  auto decode_char = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int q[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        q[k] = 0;
        ++pad;
      } else {
        q[k] = decode_char(c);
        if (q[k] < 0 || pad > 0) throw FormatError(fmt::format("base64: invalid character at offset {}", i + k));
      }
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

} // namespace tscs
