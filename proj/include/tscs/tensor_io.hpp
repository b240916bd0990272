#pragma once

#include "tscs/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace tscs {

/// Raw tensor file layout:
///   8 bytes   magic "TSCS0001"
///   u32       J (number of modes)
///   J x u64   dimensions
///   f64 x N   payload, row-major
/// All integers and doubles are little-endian.
inline constexpr char kTensorMagic[8] = {'T', 'S', 'C', 'S', '0', '0', '0', '1'};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_tensor(const DenseTensor &t);
DenseTensor decode_tensor(const std::vector<std::uint8_t> &bytes);

void write_tensor(std::ostream &os, const DenseTensor &t);
DenseTensor read_tensor(std::istream &is);

void save_tensor(const std::filesystem::path &path, const DenseTensor &t);
DenseTensor load_tensor(const std::filesystem::path &path);

/// Matrices travel as 2-mode tensors.
DenseTensor as_tensor(const DenseMatrix &m);
DenseMatrix as_matrix(const DenseTensor &t);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path &path, const std::string &contents);

std::string base64_encode(const std::vector<std::uint8_t> &bytes);
std::vector<std::uint8_t> base64_decode(const std::string &text);

} // namespace tscs
