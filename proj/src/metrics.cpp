#include "tscs/metrics.hpp"

#include <Eigen/Core>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace tscs {

namespace {

// Candidates within this margin of the fast Gram maximum are rescored with
// column_coherence so the reported value does not depend on GEMM rounding.
constexpr double kRescoreMargin = 1e-12;

double column_energy(const DenseMatrix &a, std::size_t c) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, c) * a(r, c);
  return s;
}

} // namespace

double column_coherence(const DenseMatrix &a, std::size_t i, std::size_t j) {
  double dot = 0.0;
  double ei = 0.0;
  double ej = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    dot += a(r, i) * a(r, j);
    ei += a(r, i) * a(r, i);
    ej += a(r, j) * a(r, j);
  }
  return std::abs(dot) / std::sqrt(ei * ej);
}

CoherenceReport mutual_coherence(const DenseMatrix &a) {
  const std::size_t n = a.cols();
  const std::size_t m = a.rows();
  if (n < 2) throw std::invalid_argument("mutual_coherence: need at least two columns");

  Eigen::MatrixXd q(m, n);
  for (std::size_t c = 0; c < n; ++c) {
    const double e = column_energy(a, c);
    if (e == 0.0) throw DegenerateColumnError(fmt::format("mutual_coherence: column {} is zero", c));
    const double inv = 1.0 / std::sqrt(e);
    for (std::size_t r = 0; r < m; ++r) q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a(r, c) * inv;
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  gram.selfadjointView<Eigen::Lower>().rankUpdate(q.transpose());

  double best = -1.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j + 1; i < n; ++i)
      best = std::max(best, std::abs(gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));

  CoherenceReport report{-1.0, {0, 1}};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = j + 1; i < n; ++i) {
      if (std::abs(gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) < best - kRescoreMargin) continue;
      const double v = column_coherence(a, j, i);
      if (v > report.value) report = CoherenceReport{v, {j, i}};
    }
  }
  return report;
}

double coherence_max_entry(const DenseMatrix &a) { return max_abs(a.data()); }

double mutual_coherence_pair(const DenseMatrix &psi, const DenseMatrix &phi) {
  if (psi.cols() != phi.rows()) {
    throw ShapeError(fmt::format("mutual_coherence_pair: psi is {}x{}, phi is {}x{}", psi.rows(), psi.cols(),
                                 phi.rows(), phi.cols()));
  }
  std::vector<double> row_norm(psi.rows());
  for (std::size_t k = 0; k < psi.rows(); ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < psi.cols(); ++c) s += psi(k, c) * psi(k, c);
    if (s == 0.0) throw DegenerateColumnError(fmt::format("mutual_coherence_pair: row {} of psi is zero", k));
    row_norm[k] = std::sqrt(s);
  }
  std::vector<double> col_norm(phi.cols());
  for (std::size_t j = 0; j < phi.cols(); ++j) {
    const double s = column_energy(phi, j);
    if (s == 0.0) throw DegenerateColumnError(fmt::format("mutual_coherence_pair: column {} of phi is zero", j));
    col_norm[j] = std::sqrt(s);
  }
  const auto prod = matmul(psi, phi);
  double best = 0.0;
  for (std::size_t k = 0; k < prod.rows(); ++k)
    for (std::size_t j = 0; j < prod.cols(); ++j)
      best = std::max(best, std::abs(prod(k, j)) / (row_norm[k] * col_norm[j]));
  return best;
}

double psnr(const DenseTensor &a, const DenseTensor &b, double peak) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("psnr: shapes {} and {} differ", to_string(a.shape()), to_string(b.shape())));
  }
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - center;
    w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto &v : w) v /= total;
  return w;
}

namespace {

// Separable "valid" filtering of an h x w plane with the 1-D window g.
std::vector<double> filter_valid(const std::vector<double> &plane, std::size_t h, std::size_t w,
                                 const std::vector<double> &g) {
  const std::size_t k = g.size();
  const std::size_t ow = w - k + 1;
  const std::size_t oh = h - k + 1;
  std::vector<double> horiz(h * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += g[t] * plane[r * w + c + t];
      horiz[r * ow + c] = s;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += g[t] * horiz[(r + t) * ow + c];
      out[r * ow + c] = s;
    }
  return out;
}

double ssim_plane(const std::vector<double> &a, const std::vector<double> &b, std::size_t h, std::size_t w,
                  const SsimParams &p, const std::vector<double> &g) {
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, g);
  const auto mu_b = filter_valid(b, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g);
  const auto e_bb = filter_valid(bb, h, w, g);
  const auto e_ab = filter_valid(ab, h, w, g);
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
  const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

} // namespace

double ssim(const DenseTensor &a, const DenseTensor &b, const SsimParams &params) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("ssim: shapes {} and {} differ", to_string(a.shape()), to_string(b.shape())));
  }
  if (a.order() != 2 && a.order() != 3) throw ShapeError("ssim: expected a 2-D image or a 3-D (h, w, c) image");
  const std::size_t h = a.dim(0);
  const std::size_t w = a.dim(1);
  const std::size_t channels = a.order() == 3 ? a.dim(2) : 1;
  if (h < params.window || w < params.window) {
    throw ShapeError(fmt::format("ssim: image {}x{} smaller than the {}x{} window", h, w, params.window,
                                 params.window));
  }
  const auto g = gaussian_window(params.window, params.sigma);
  double total = 0.0;
  std::vector<double> pa(h * w), pb(h * w);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) {
      pa[i] = a[i * channels + c];
      pb[i] = b[i * channels + c];
    }
    total += ssim_plane(pa, pb, h, w, params, g);
  }
  return total / static_cast<double>(channels);
}

} // namespace tscs
