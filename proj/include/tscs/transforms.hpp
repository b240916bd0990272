#pragma once

#include "tscs/tensor.hpp"

#include <cstddef>
#include <string_view>

namespace tscs {

enum class BasisKind { identity, block_dct };

std::string_view to_string(BasisKind kind);

/// Fixed orthonormal, block-diagonal n x n basis factor. `matrix` is the
/// analysis side; its inverse is the transpose.
struct BasisFactor {
  DenseMatrix matrix;
  std::size_t block_size = 1;
  BasisKind kind = BasisKind::identity;

  std::size_t size() const { return matrix.rows(); }
  /// The synthesis (inverse) factor, equal to the transpose.
  BasisFactor inverse() const;

  bool operator==(const BasisFactor &) const = default;
};

/// Orthonormal DCT-II matrix: row 0 is 1/sqrt(n), row i is
/// sqrt(2/n) cos(pi (2j+1) i / 2n).
DenseMatrix dct_matrix(std::size_t n);

/// n x n block-diagonal matrix carrying n/b copies of dct_matrix(b).
/// One coordinate of a separable block-wise 2D DCT.
BasisFactor block_dct_factor(std::size_t n, std::size_t block);

BasisFactor identity_factor(std::size_t n);

/// block == 0 or block == 1 selects the identity; anything else a block DCT.
BasisFactor make_basis(std::size_t n, std::size_t block);

} // namespace tscs
