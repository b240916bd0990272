#pragma once

#include "tscs/rng.hpp"
#include "tscs/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tscs {

/// k-sparse vector with explicit sorted support.
struct SparseVector {
  std::size_t length = 0;
  std::vector<std::size_t> support;
  std::vector<double> values;

  std::vector<double> dense() const;
};

struct OmpResult {
  SparseVector estimate;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  /// Columns in the order they were selected.
  std::vector<std::size_t> selection_order;
  /// Set when a selected column was (numerically) in the span of earlier ones;
  /// coefficients then come from a minimum-norm least-squares solve.
  bool rank_deficient = false;
};

/// Orthogonal matching pursuit with exactly k greedy steps (fewer when the
/// residual vanishes). Each step picks the unchosen column maximizing
/// |a_i^T r| / |a_i| (lowest index on ties) and re-solves least squares on
/// the support.
OmpResult omp(const DenseMatrix &a, std::span<const double> y, std::size_t k);

/// Random matrix family used by the coherence and recovery experiments.
struct MatrixSource {
  enum class Kind { unconstrained, tensor_sum, structured };
  Kind kind = Kind::unconstrained;
  std::size_t branches = 1;
  Shape signal_shape;           ///< (n1, .., nJ); N = product
  Shape measurement_shape;      ///< (m1, .., mJ); m = product
  std::vector<std::size_t> blocks; ///< per-branch DCT block size, structured only

  std::size_t signal_length() const { return element_count(signal_shape); }
  std::size_t measurement_count() const { return element_count(measurement_shape); }
  std::string label() const;
};

/// Draws one m x N matrix. Unconstrained: i.i.d. N(0, 1). Tensor sources:
/// the materialized tensor-sum operator built with `seed`.
DenseMatrix sample_matrix(const MatrixSource &source, std::uint64_t seed);

/// Draws a k-sparse signal: support uniform without replacement, values N(0, 1).
SparseVector sample_sparse_signal(std::size_t length, std::size_t k, Rng &rng);

struct RecoveryOutcome {
  double rate = 0.0;
  std::size_t successes = 0;
  std::size_t trials = 0;
};

/// Support equality and sup-norm error at most this value.
inline constexpr double kExactRecoveryTolerance = 1e-6;

bool is_exact_recovery(const SparseVector &truth, const SparseVector &estimate);

/// Fraction of trials in which OMP recovers a fresh k-sparse signal from a
/// fresh matrix. Trial t draws everything from derive_seed(seed, t).
RecoveryOutcome exact_recovery_rate(const MatrixSource &source, std::size_t n, std::size_t k, std::size_t m,
                                    std::size_t trials, std::uint64_t seed, std::size_t threads = 1);

} // namespace tscs
