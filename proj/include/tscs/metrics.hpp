#pragma once

#include "tscs/tensor.hpp"

#include <cstddef>
#include <stdexcept>
#include <utility>

namespace tscs {

struct DegenerateColumnError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CoherenceReport {
  double value = 0.0;
  /// Column pair (i, j), i < j, attaining the maximum.
  std::pair<std::size_t, std::size_t> argmax_pair{0, 1};
};

/// Normalized inner product |<a_i, a_j>| / (|a_i| |a_j|) computed with plain
/// sequential sums. Every reported coherence value is produced by this routine.
double column_coherence(const DenseMatrix &a, std::size_t i, std::size_t j);

/// max over i < j of the normalized absolute column inner products.
CoherenceReport mutual_coherence(const DenseMatrix &a);

/// max |A_ij|.
double coherence_max_entry(const DenseMatrix &a);

/// max_{k,j} |<psi_k, phi_j>| over rows of psi and columns of phi. Rows of psi
/// and columns of phi are normalized to unit length before comparison.
double mutual_coherence_pair(const DenseMatrix &psi, const DenseMatrix &phi);

/// 10 log10(peak^2 / MSE) in dB; +infinity when the inputs are identical.
double psnr(const DenseTensor &a, const DenseTensor &b, double peak = 1.0);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean single-scale SSIM over all fully contained windows. Accepts 2-D
/// tensors, or 3-D tensors whose last mode indexes channels (channel mean).
double ssim(const DenseTensor &a, const DenseTensor &b, const SsimParams &params = {});

/// Normalized 1-D Gaussian taps used by ssim.
std::vector<double> gaussian_window(std::size_t size, double sigma);

} // namespace tscs
