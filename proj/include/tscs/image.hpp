#pragma once

#include "tscs/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace tscs {

/// Thrown on malformed netpbm input; `offset` is the byte position of the problem.
struct ImageParseError : std::runtime_error {
  ImageParseError(const std::string &what, std::size_t offset);
  std::size_t offset;
};

/// 8-bit gray (P5) or RGB (P6) image with samples in [0, 1], interleaved by pixel.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> samples;

  /// (height, width) for gray, (height, width, 3) for RGB.
  DenseTensor to_tensor() const;
  /// Accepts (h, w) or (h, w, 3); values are clipped to [0, 1].
  static ImageBuffer from_tensor(const DenseTensor &t);
};

ImageBuffer decode_netpbm(const std::vector<std::uint8_t> &bytes);
/// Samples are scaled by 255, rounded half-up and clamped to [0, 255].
std::vector<std::uint8_t> encode_netpbm(const ImageBuffer &image);

ImageBuffer load_image(const std::filesystem::path &path);
void save_image(const ImageBuffer &image, const std::filesystem::path &path);

} // namespace tscs
