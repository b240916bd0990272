#include "tscs/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <limits>

namespace tscs {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

void require_finite(std::span<const double> data, const char *what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NonFiniteError(fmt::format("{}: non-finite value at flat index {}", what, i));
    }
  }
}

// Splits a shape around `mode` into (outer, n, inner) extents.
struct ModeSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

ModeSplit split_at(const Shape &shape, std::size_t mode) {
  ModeSplit s;
  for (std::size_t i = 0; i < mode; ++i) s.outer *= shape[i];
  s.n = shape[mode];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_mode(const Shape &shape, std::size_t mode) {
  if (mode >= shape.size()) {
    throw ShapeError(fmt::format("mode {} out of range for tensor of order {}", mode, shape.size()));
  }
}

} // namespace

std::size_t element_count(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape &shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) throw ShapeError(fmt::format("matrix dimensions must be positive, got {}x{}", rows, cols));
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ShapeError(fmt::format("matrix dimensions must be positive, got {}x{}", rows, cols));
  if (data_.size() != rows * cols) {
    throw ShapeError(fmt::format("matrix {}x{} needs {} values, got {}", rows, cols, rows * cols, data_.size()));
  }
  require_finite(data_, "DenseMatrix");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  if (rows_ == 0 || cols_ == 0) throw ShapeError("matrix literal must be non-empty");
  data_.reserve(rows_ * cols_);
  for (const auto &r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor must have at least one mode");
  for (auto d : shape_) {
    if (d == 0) throw ShapeError(fmt::format("tensor dimensions must be positive, got {}", to_string(shape_)));
  }
  data_.assign(element_count(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor must have at least one mode");
  for (auto d : shape_) {
    if (d == 0) throw ShapeError(fmt::format("tensor dimensions must be positive, got {}", to_string(shape_)));
  }
  if (data_.size() != element_count(shape_)) {
    throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}", to_string(shape_),
                                 element_count(shape_), data_.size()));
  }
  require_finite(data_, "DenseTensor");
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError(fmt::format("index of order {} for tensor of order {}", index.size(), shape_.size()));
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw std::out_of_range("tensor index out of range");
    flat = flat * shape_[i] + index[i];
  }
  return flat;
}

double DenseTensor::at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }
double &DenseTensor::at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix transpose(const DenseMatrix &a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

DenseMatrix matmul(const DenseMatrix &a, const DenseMatrix &b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: {}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  Map(c.data().data(), c.rows(), c.cols()).noalias() =
      ConstMap(a.data().data(), a.rows(), a.cols()) * ConstMap(b.data().data(), b.rows(), b.cols());
  return c;
}

DenseMatrix kron(const DenseMatrix &a, const DenseMatrix &b, std::size_t cap) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (rows != 0 && cols > cap / rows) {
    throw MaterializationError(
        fmt::format("kron result {}x{} is too large to materialize (cap {} elements)", rows, cols, cap));
  }
  DenseMatrix k(rows, cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double s = a(i, j);
      for (std::size_t p = 0; p < b.rows(); ++p) {
        double *dst = &k(i * b.rows() + p, j * b.cols());
        for (std::size_t q = 0; q < b.cols(); ++q) dst[q] = s * b(p, q);
      }
    }
  }
  return k;
}

std::vector<double> matvec(const DenseMatrix &a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError(fmt::format("matvec: {}x{} times {}", a.rows(), a.cols(), x.size()));
  std::vector<double> y(a.rows());
  Eigen::Map<Eigen::VectorXd>(y.data(), y.size()).noalias() =
      ConstMap(a.data().data(), a.rows(), a.cols()) * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  return y;
}

DenseTensor mode_product(const DenseTensor &x, const DenseMatrix &m, std::size_t mode) {
  check_mode(x.shape(), mode);
  if (m.cols() != x.dim(mode)) {
    throw ShapeError(fmt::format("mode_product: mode {} has size {} but matrix is {}x{}", mode, x.dim(mode),
                                 m.rows(), m.cols()));
  }
  const auto s = split_at(x.shape(), mode);
  Shape out_shape = x.shape();
  out_shape[mode] = m.rows();
  DenseTensor y(std::move(out_shape));
  const ConstMap mm(m.data().data(), m.rows(), m.cols());
  for (std::size_t o = 0; o < s.outer; ++o) {
    const ConstMap slab(x.data().data() + o * s.n * s.inner, s.n, s.inner);
    Map out(y.data().data() + o * m.rows() * s.inner, m.rows(), s.inner);
    out.noalias() = mm * slab;
  }
  return y;
}

DenseMatrix matricize(const DenseTensor &x, std::size_t mode) {
  check_mode(x.shape(), mode);
  const auto s = split_at(x.shape(), mode);
  DenseMatrix m(s.n, s.outer * s.inner);
  const auto src = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t k = 0; k < s.inner; ++k) m(i, o * s.inner + k) = src[(o * s.n + i) * s.inner + k];
  return m;
}

DenseTensor dematricize(const DenseMatrix &m, std::size_t mode, const Shape &shape) {
  check_mode(shape, mode);
  const auto s = split_at(shape, mode);
  if (m.rows() != s.n || m.cols() != s.outer * s.inner) {
    throw ShapeError(fmt::format("dematricize: {}x{} matrix does not unfold shape {} at mode {}", m.rows(), m.cols(),
                                 to_string(shape), mode));
  }
  DenseTensor x(shape);
  auto dst = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t k = 0; k < s.inner; ++k) dst[(o * s.n + i) * s.inner + k] = m(i, o * s.inner + k);
  return x;
}

DenseTensor vec(const DenseTensor &x) {
  return DenseTensor(Shape{x.size()}, std::vector<double>(x.data().begin(), x.data().end()));
}

double inner(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("inner: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

} // namespace tscs
