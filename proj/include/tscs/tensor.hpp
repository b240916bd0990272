#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tscs {

/// Thrown when operand shapes are incompatible.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a tensor or matrix would hold NaN/Inf.
struct NonFiniteError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Thrown when a dense materialization would exceed the configured cap.
struct MaterializationError : std::length_error {
  using std::length_error::length_error;
};

/// Default upper bound on materialized matrix elements (2^26).
inline constexpr std::size_t kDefaultMaterializationCap = std::size_t{1} << 26;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape &shape);
std::string to_string(const Shape &shape);

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const DenseMatrix &) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// J-dimensional dense tensor, row-major (last mode varies fastest).
class DenseTensor {
public:
  DenseTensor() = default;
  /// Zero tensor of the given shape.
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape &shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double &operator[](std::size_t flat) { return data_[flat]; }

  /// Element access by multi-index.
  double at(std::span<const std::size_t> index) const;
  double &at(std::span<const std::size_t> index);

  bool all_finite() const;

  bool operator==(const DenseTensor &) const = default;

private:
  std::size_t flat_index(std::span<const std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

// Matrix helpers.
DenseMatrix transpose(const DenseMatrix &a);
DenseMatrix matmul(const DenseMatrix &a, const DenseMatrix &b);
DenseMatrix kron(const DenseMatrix &a, const DenseMatrix &b,
                 std::size_t cap = kDefaultMaterializationCap);
std::vector<double> matvec(const DenseMatrix &a, std::span<const double> x);

/// Mode product X ×_mode M, with `mode` zero-based. Requires M.cols() == X.dim(mode).
DenseTensor mode_product(const DenseTensor &x, const DenseMatrix &m, std::size_t mode);

/// mat_j unfolding: rows index `mode`, columns enumerate the remaining modes
/// in ascending order, row-major.
DenseMatrix matricize(const DenseTensor &x, std::size_t mode);
DenseTensor dematricize(const DenseMatrix &m, std::size_t mode, const Shape &shape);

/// Flat row-major copy as a 1-D tensor.
DenseTensor vec(const DenseTensor &x);

// Elementwise helpers used across modules.
double inner(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

} // namespace tscs
