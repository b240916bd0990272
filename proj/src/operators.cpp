#include "tscs/operators.hpp"

#include "tscs/rng.hpp"

#include <cmath>
#include <fmt/format.h>

namespace tscs {

namespace {

void fill_gaussian(DenseMatrix &m, double stddev, Rng &rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto &v : m.data()) v = normal(rng);
}

void check_plan(const BasisPlan &plan, std::size_t branches, std::size_t modes) {
  if (plan.empty()) return;
  if (plan.size() != branches) {
    throw std::invalid_argument(fmt::format("basis plan lists {} branches, operator has {}", plan.size(), branches));
  }
  for (const auto &row : plan) {
    if (row.size() != modes) {
      throw std::invalid_argument(fmt::format("basis plan row lists {} modes, operator has {}", row.size(), modes));
    }
  }
}

std::size_t plan_block(const BasisPlan &plan, std::size_t t, std::size_t j) {
  return plan.empty() ? 0 : plan[t][j];
}

} // namespace

std::size_t FactorMatrix::in_dim() const { return weights.cols(); }

DenseMatrix FactorMatrix::effective() const {
  if (!basis || basis->kind == BasisKind::identity) return weights;
  return composition == Composition::analysis ? matmul(weights, basis->matrix) : matmul(basis->matrix, weights);
}

DenseMatrix FactorMatrix::weight_gradient(const DenseMatrix &effective_gradient) const {
  if (!basis || basis->kind == BasisKind::identity) return effective_gradient;
  // analysis: E = W B  =>  dW = dE B^T;  synthesis: E = B W  =>  dW = B^T dE
  return composition == Composition::analysis ? matmul(effective_gradient, transpose(basis->matrix))
                                              : matmul(transpose(basis->matrix), effective_gradient);
}

TensorSumLayer::TensorSumLayer(Shape input_shape, Shape output_shape, std::vector<Branch> branches)
    : input_shape_(std::move(input_shape)), output_shape_(std::move(output_shape)), branches_(std::move(branches)) {
  if (branches_.empty()) throw std::invalid_argument("tensor-sum layer needs at least one branch");
  if (input_shape_.empty() || input_shape_.size() != output_shape_.size()) {
    throw ShapeError(fmt::format("layer shapes {} -> {} must have the same positive order", to_string(input_shape_),
                                 to_string(output_shape_)));
  }
  for (std::size_t t = 0; t < branches_.size(); ++t) {
    const auto &branch = branches_[t];
    if (branch.size() != input_shape_.size()) {
      throw ShapeError(fmt::format("branch {} has {} factors for {} modes", t, branch.size(), input_shape_.size()));
    }
    for (std::size_t j = 0; j < branch.size(); ++j) {
      const auto &f = branch[j];
      if (f.basis) {
        const auto expected = f.composition == Composition::analysis ? f.weights.cols() : f.weights.rows();
        if (f.basis->size() != expected) {
          throw ShapeError(fmt::format("branch {} mode {}: basis size {} does not match weights {}x{}", t, j,
                                       f.basis->size(), f.weights.rows(), f.weights.cols()));
        }
      }
      // The basis is square, so the effective factor keeps the weight dimensions.
      const auto eff_rows = f.weights.rows();
      const auto eff_cols = f.weights.cols();
      if (eff_rows != output_shape_[j] || eff_cols != input_shape_[j]) {
        throw ShapeError(fmt::format("branch {} mode {}: factor maps {} -> {}, layer expects {} -> {}", t, j, eff_cols,
                                     eff_rows, input_shape_[j], output_shape_[j]));
      }
    }
  }
}

FactorGrid TensorSumLayer::effective_factors() const {
  FactorGrid grid;
  grid.reserve(branches_.size());
  for (const auto &branch : branches_) {
    auto &row = grid.emplace_back();
    row.reserve(branch.size());
    for (const auto &f : branch) row.push_back(f.effective());
  }
  return grid;
}

DenseTensor TensorSumLayer::forward(const DenseTensor &x) const {
  if (x.shape() != input_shape_) {
    throw ShapeError(fmt::format("input shape {} does not match operator input {}", to_string(x.shape()),
                                 to_string(input_shape_)));
  }
  DenseTensor out(output_shape_);
  for (const auto &branch : branches_) {
    DenseTensor y = x;
    for (std::size_t j = 0; j < branch.size(); ++j) y = mode_product(y, branch[j].effective(), j);
    axpy(1.0, y.data(), out.data());
  }
  return out;
}

DenseTensor TensorSumLayer::forward_transposed(const DenseTensor &y) const {
  if (y.shape() != output_shape_) {
    throw ShapeError(fmt::format("input shape {} does not match operator output {}", to_string(y.shape()),
                                 to_string(output_shape_)));
  }
  DenseTensor out(input_shape_);
  for (const auto &branch : branches_) {
    DenseTensor x = y;
    for (std::size_t j = branch.size(); j-- > 0;) x = mode_product(x, transpose(branch[j].effective()), j);
    axpy(1.0, x.data(), out.data());
  }
  return out;
}

DenseMatrix TensorSumLayer::materialize(std::size_t cap) const {
  const auto rows = element_count(output_shape_);
  const auto cols = element_count(input_shape_);
  if (cols > cap / rows) {
    throw MaterializationError(
        fmt::format("operator {}x{} is too large to materialize (cap {} elements)", rows, cols, cap));
  }
  DenseMatrix total(rows, cols);
  for (const auto &branch : branches_) {
    DenseMatrix k = branch[0].effective();
    for (std::size_t j = 1; j < branch.size(); ++j) k = kron(k, branch[j].effective(), cap);
    axpy(1.0, k.data(), total.data());
  }
  return total;
}

FactorGrid TensorSumLayer::weight_gradients(const DenseTensor &x, const DenseTensor &output_gradient) const {
  if (x.shape() != input_shape_) {
    throw ShapeError(fmt::format("input shape {} does not match operator input {}", to_string(x.shape()),
                                 to_string(input_shape_)));
  }
  if (output_gradient.shape() != output_shape_) {
    throw ShapeError(fmt::format("gradient shape {} does not match operator output {}",
                                 to_string(output_gradient.shape()), to_string(output_shape_)));
  }
  const std::size_t modes = mode_count();
  FactorGrid grads;
  grads.reserve(branches_.size());
  for (const auto &branch : branches_) {
    std::vector<DenseMatrix> eff;
    eff.reserve(modes);
    for (const auto &f : branch) eff.push_back(f.effective());

    // Forward intermediates Y_0 .. Y_{J-1}.
    std::vector<DenseTensor> partial;
    partial.reserve(modes);
    partial.push_back(x);
    for (std::size_t j = 0; j + 1 < modes; ++j) partial.push_back(mode_product(partial.back(), eff[j], j));

    auto &row = grads.emplace_back(modes);
    DenseTensor upstream = output_gradient; // dL/dY_j, starting at j = J
    for (std::size_t j = modes; j-- > 0;) {
      const auto d_eff = matmul(matricize(upstream, j), transpose(matricize(partial[j], j)));
      row[j] = branch[j].weight_gradient(d_eff);
      if (j > 0) upstream = mode_product(upstream, transpose(eff[j]), j);
    }
  }
  return grads;
}

std::size_t TensorSumLayer::stored_weight_count() const {
  std::size_t n = 0;
  for (const auto &branch : branches_)
    for (const auto &f : branch) n += f.weights.size();
  return n;
}

BasisPlan spatial_block_plan(const std::vector<std::size_t> &blocks, std::size_t modes) {
  BasisPlan plan;
  plan.reserve(blocks.size());
  for (auto b : blocks) {
    std::vector<std::size_t> row(modes, 0);
    for (std::size_t j = 0; j < std::min<std::size_t>(2, modes); ++j) row[j] = b;
    plan.push_back(std::move(row));
  }
  return plan;
}

TensorSumOperator build_operator(const OperatorConfig &config) {
  const auto &in = config.input_shape;
  const auto &out = config.output_shape;
  if (in.empty() || in.size() != out.size()) {
    throw ShapeError(fmt::format("operator shapes {} -> {} must have the same positive order", to_string(in),
                                 to_string(out)));
  }
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (in[j] == 0 || out[j] == 0) throw ShapeError("operator dimensions must be positive");
    if (out[j] > in[j]) {
      throw ShapeError(fmt::format("mode {}: {} measurements exceed signal size {}", j, out[j], in[j]));
    }
  }
  if (config.branches == 0) throw std::invalid_argument("operator needs at least one branch");
  check_plan(config.basis_plan, config.branches, in.size());

  Rng rng(config.seed);
  std::vector<Branch> branches(config.branches);
  for (std::size_t t = 0; t < config.branches; ++t) {
    for (std::size_t j = 0; j < in.size(); ++j) {
      FactorMatrix f;
      f.composition = Composition::analysis;
      f.weights = DenseMatrix(out[j], in[j]);
      if (config.init == WeightInit::identity) {
        if (out[j] != in[j]) throw ShapeError("identity initialization requires square factors");
        f.weights = DenseMatrix::identity(in[j]);
      } else {
        fill_gaussian(f.weights, 1.0 / std::sqrt(static_cast<double>(in[j])), rng);
      }
      f.basis = make_basis(in[j], plan_block(config.basis_plan, t, j));
      branches[t].push_back(std::move(f));
    }
  }
  return TensorSumOperator{config, TensorSumLayer(in, out, std::move(branches))};
}

DenseTensor apply(const TensorSumOperator &op, const DenseTensor &signal) { return op.layer.forward(signal); }

DenseMatrix materialize(const TensorSumOperator &op, std::size_t cap) { return op.layer.materialize(cap); }

DenseTensor transpose_apply(const TensorSumOperator &op, const DenseTensor &measurement) {
  return op.layer.forward_transposed(measurement);
}

AdjointOperator build_adjoint(const TensorSumOperator &op, const AdjointInit &init) {
  Rng rng(init.seed);
  std::vector<Branch> branches;
  branches.reserve(op.branch_count());
  for (const auto &sensing : op.layer.branches()) {
    auto &branch = branches.emplace_back();
    for (const auto &f : sensing) {
      FactorMatrix a;
      a.composition = Composition::synthesis;
      if (init.kind == AdjointInit::Kind::transpose) {
        a.weights = transpose(f.weights);
      } else {
        a.weights = DenseMatrix(f.weights.cols(), f.weights.rows());
        fill_gaussian(a.weights, 1.0 / std::sqrt(static_cast<double>(f.weights.rows())), rng);
      }
      if (f.basis) a.basis = f.basis->inverse();
      branch.push_back(std::move(a));
    }
  }
  return AdjointOperator{init, op.config.basis_plan,
                         TensorSumLayer(op.output_shape(), op.input_shape(), std::move(branches))};
}

DenseTensor proxy(const AdjointOperator &adj, const DenseTensor &measurement) {
  return adj.layer.forward(measurement);
}

ParamCount param_count(const Shape &input_shape, const Shape &output_shape, std::size_t branches) {
  if (input_shape.size() != output_shape.size()) throw ShapeError("param_count: shape orders differ");
  ParamCount c;
  std::uint64_t per_branch = 0;
  std::uint64_t m = 1;
  std::uint64_t n = 1;
  for (std::size_t j = 0; j < input_shape.size(); ++j) {
    per_branch += static_cast<std::uint64_t>(output_shape[j]) * input_shape[j];
    m *= output_shape[j];
    n *= input_shape[j];
  }
  c.factorized = branches * per_branch;
  c.dense_equivalent = m * n;
  return c;
}

ParamCount param_count(const TensorSumOperator &op) {
  return param_count(op.input_shape(), op.output_shape(), op.branch_count());
}

} // namespace tscs
