#include "tscs/transforms.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numbers>

namespace tscs {

std::string_view to_string(BasisKind kind) {
  switch (kind) {
  case BasisKind::identity: return "identity";
  case BasisKind::block_dct: return "block_dct";
  }
  return "unknown";
}

BasisFactor BasisFactor::inverse() const { return BasisFactor{transpose(matrix), block_size, kind}; }

DenseMatrix dct_matrix(std::size_t n) {
  if (n == 0) throw std::invalid_argument("dct_matrix: size must be positive");
  DenseMatrix m(n, n);
  const double dn = static_cast<double>(n);
  const double first = 1.0 / std::sqrt(dn);
  const double rest = std::sqrt(2.0 / dn);
  for (std::size_t j = 0; j < n; ++j) m(0, j) = first;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m(i, j) = rest * std::cos(std::numbers::pi * static_cast<double>((2 * j + 1) * i) / (2.0 * dn));
    }
  }
  return m;
}

BasisFactor block_dct_factor(std::size_t n, std::size_t block) {
  if (n == 0 || block == 0) throw std::invalid_argument("block_dct_factor: sizes must be positive");
  if (n % block != 0) {
    throw std::invalid_argument(fmt::format("block_dct_factor: block size {} does not divide {}", block, n));
  }
  if (block == 1) return BasisFactor{DenseMatrix::identity(n), 1, BasisKind::block_dct};
  const auto d = dct_matrix(block);
  DenseMatrix m(n, n);
  for (std::size_t b = 0; b < n / block; ++b) {
    const std::size_t off = b * block;
    for (std::size_t i = 0; i < block; ++i)
      for (std::size_t j = 0; j < block; ++j) m(off + i, off + j) = d(i, j);
  }
  return BasisFactor{std::move(m), block, BasisKind::block_dct};
}

BasisFactor identity_factor(std::size_t n) {
  if (n == 0) throw std::invalid_argument("identity_factor: size must be positive");
  return BasisFactor{DenseMatrix::identity(n), 1, BasisKind::identity};
}

BasisFactor make_basis(std::size_t n, std::size_t block) {
  if (block <= 1) return identity_factor(n);
  return block_dct_factor(n, block);
}

} // namespace tscs
