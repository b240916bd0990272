#include "tscs/recovery.hpp"

#include "tscs/operators.hpp"
#include "tscs/parallel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

namespace tscs {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Idx = Eigen::Index;

// A column whose orthogonal remainder falls below this fraction of its norm
// is treated as linearly dependent on the current support.
constexpr double kDependenceTolerance = 1e-10;
// Relative residual at which the greedy loop stops early.
constexpr double kResidualStop = 1e-12;

} // namespace

std::vector<double> SparseVector::dense() const {
  std::vector<double> x(length, 0.0);
  for (std::size_t i = 0; i < support.size(); ++i) x[support[i]] = values[i];
  return x;
}

OmpResult omp(const DenseMatrix &a, std::span<const double> y, std::size_t k) {
  const Idx m = static_cast<Idx>(a.rows());
  const Idx n = static_cast<Idx>(a.cols());
  if (y.size() != a.rows()) {
    throw ShapeError(fmt::format("omp: matrix has {} rows, measurement has {} entries", a.rows(), y.size()));
  }
  if (k > a.rows()) throw std::invalid_argument(fmt::format("omp: sparsity {} exceeds {} rows", k, a.rows()));

  OmpResult result;
  result.estimate.length = a.cols();
  const ConstMap mat(a.data().data(), m, n);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), m);
  const double y_norm = yv.norm();
  if (y_norm == 0.0 || k == 0) {
    result.residual_norm = y_norm;
    return result;
  }

  const Eigen::VectorXd col_norm = mat.colwise().norm().transpose();
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Eigen::MatrixXd q(m, static_cast<Idx>(k));
  Eigen::MatrixXd r_factor = Eigen::MatrixXd::Zero(static_cast<Idx>(k), static_cast<Idx>(k));
  Eigen::VectorXd z(static_cast<Idx>(k));
  Eigen::VectorXd residual = yv;
  Eigen::VectorXd coeffs; // min-norm solution once rank deficiency is hit
  std::vector<std::size_t> &order = result.selection_order;

  for (std::size_t it = 0; it < k; ++it) {
    const Eigen::VectorXd corr = mat.transpose() * residual;
    Idx pick = -1;
    double best = -1.0;
    for (Idx j = 0; j < n; ++j) {
      if (chosen[static_cast<std::size_t>(j)] || col_norm(j) == 0.0) continue;
      const double score = std::abs(corr(j)) / col_norm(j);
      if (score > best) {
        best = score;
        pick = j;
      }
    }
    if (pick < 0) break;
    chosen[static_cast<std::size_t>(pick)] = 1;
    order.push_back(static_cast<std::size_t>(pick));
    const Idx s = static_cast<Idx>(order.size()) - 1;

    if (!result.rank_deficient) {
      Eigen::VectorXd v = mat.col(pick);
      Eigen::VectorXd h = Eigen::VectorXd::Zero(s);
      for (int pass = 0; pass < 2 && s > 0; ++pass) {
        const Eigen::VectorXd hp = q.leftCols(s).transpose() * v;
        v.noalias() -= q.leftCols(s) * hp;
        h += hp;
      }
      const double rho = v.norm();
      if (rho <= kDependenceTolerance * col_norm(pick)) {
        result.rank_deficient = true;
      } else {
        q.col(s) = v / rho;
        r_factor.col(s).head(s) = h;
        r_factor(s, s) = rho;
        z(s) = q.col(s).dot(yv);
        residual = yv - q.leftCols(s + 1) * z.head(s + 1);
      }
    }
    if (result.rank_deficient) {
      Eigen::MatrixXd sub(m, s + 1);
      for (Idx c = 0; c <= s; ++c) sub.col(c) = mat.col(static_cast<Idx>(order[static_cast<std::size_t>(c)]));
      coeffs = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(sub).solve(yv);
      residual = yv - sub * coeffs;
    }
    result.iterations = it + 1;
    if (residual.norm() <= kResidualStop * y_norm) break;
  }

  const Idx used = static_cast<Idx>(order.size());
  if (!result.rank_deficient) {
    coeffs = r_factor.topLeftCorner(used, used).triangularView<Eigen::Upper>().solve(z.head(used));
  }
  // Recompute the residual against the original columns.
  Eigen::VectorXd fit = Eigen::VectorXd::Zero(m);
  for (Idx c = 0; c < used; ++c) fit += coeffs(c) * mat.col(static_cast<Idx>(order[static_cast<std::size_t>(c)]));
  result.residual_norm = (yv - fit).norm();

  std::vector<std::size_t> perm(order.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](std::size_t x, std::size_t w) { return order[x] < order[w]; });
  for (auto p : perm) {
    result.estimate.support.push_back(order[p]);
    result.estimate.values.push_back(coeffs(static_cast<Idx>(p)));
  }
  return result;
}

std::string MatrixSource::label() const {
  switch (kind) {
  case Kind::unconstrained: return "unconstrained";
  case Kind::tensor_sum: return "tensor_sum";
  case Kind::structured: return "structured";
  }
  return "unknown";
}

DenseMatrix sample_matrix(const MatrixSource &source, std::uint64_t seed) {
  const std::size_t n = source.signal_length();
  const std::size_t m = source.measurement_count();
  if (source.kind == MatrixSource::Kind::unconstrained) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix a(m, n);
    for (auto &v : a.data()) v = normal(rng);
    return a;
  }
  OperatorConfig config;
  config.input_shape = source.signal_shape;
  config.output_shape = source.measurement_shape;
  config.branches = source.branches;
  config.seed = seed;
  if (source.kind == MatrixSource::Kind::structured) {
    if (source.blocks.size() != source.branches) {
      throw std::invalid_argument(
          fmt::format("structured source lists {} block sizes for {} branches", source.blocks.size(), source.branches));
    }
    config.basis_plan = spatial_block_plan(source.blocks, source.signal_shape.size());
  }
  return materialize(build_operator(config));
}

SparseVector sample_sparse_signal(std::size_t length, std::size_t k, Rng &rng) {
  if (k > length) throw std::invalid_argument("sample_sparse_signal: k exceeds length");
  std::vector<std::size_t> idx(length);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, length - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  SparseVector x;
  x.length = length;
  x.support.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(x.support.begin(), x.support.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  x.values.resize(k);
  for (auto &v : x.values) v = normal(rng);
  return x;
}

bool is_exact_recovery(const SparseVector &truth, const SparseVector &estimate) {
  if (truth.support != estimate.support) return false;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    if (!(std::abs(truth.values[i] - estimate.values[i]) <= kExactRecoveryTolerance)) return false;
  }
  return true;
}

RecoveryOutcome exact_recovery_rate(const MatrixSource &source, std::size_t n, std::size_t k, std::size_t m,
                                    std::size_t trials, std::uint64_t seed, std::size_t threads) {
  if (source.signal_length() != n) {
    throw std::invalid_argument(
        fmt::format("signal shape {} does not factor N = {}", to_string(source.signal_shape), n));
  }
  if (source.measurement_count() != m) {
    throw std::invalid_argument(
        fmt::format("measurement shape {} does not factor m = {}", to_string(source.measurement_shape), m));
  }
  if (m > n) throw std::invalid_argument(fmt::format("m = {} exceeds N = {}", m, n));
  if (trials == 0) throw std::invalid_argument("exact_recovery_rate: trials must be positive");

  RecoveryOutcome out;
  out.trials = trials;
  // More nonzeros than measurements: uniqueness is impossible.
  if (k > m) return out;

  std::vector<char> success(trials, 0);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    const std::uint64_t matrix_seed = rng();
    const auto x = sample_sparse_signal(n, k, rng);
    const auto a = sample_matrix(source, matrix_seed);
    const auto y = matvec(a, x.dense());
    success[t] = is_exact_recovery(x, omp(a, y, k).estimate) ? 1 : 0;
  });
  out.successes = static_cast<std::size_t>(std::count(success.begin(), success.end(), 1));
  out.rate = static_cast<double>(out.successes) / static_cast<double>(trials);
  return out;
}

} // namespace tscs
