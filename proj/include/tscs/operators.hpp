#pragma once

#include "tscs/tensor.hpp"
#include "tscs/transforms.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace tscs {

/// Side on which the fixed basis composes with the learnable weights.
enum class Composition {
  analysis,  ///< effective = weights * basis      (sensing: Psi* Omega')
  synthesis, ///< effective = basis * weights      (adjoint: Omega B*)
};

/// One per-mode factor: learnable weights optionally composed with a fixed basis.
struct FactorMatrix {
  DenseMatrix weights;
  std::optional<BasisFactor> basis;
  Composition composition = Composition::analysis;

  DenseMatrix effective() const;
  /// Chains dL/d(effective) through the fixed basis to dL/d(weights).
  DenseMatrix weight_gradient(const DenseMatrix &effective_gradient) const;

  std::size_t out_dim() const { return weights.rows(); }
  std::size_t in_dim() const;
};

using Branch = std::vector<FactorMatrix>;
/// One matrix per branch per mode.
using FactorGrid = std::vector<std::vector<DenseMatrix>>;

/// Sum over branches of separable mode-product chains:
///   out = sum_t x ×_1 F_1^(t) ×_2 ... ×_J F_J^(t)
/// Shared machinery of the sensing and adjoint operators.
class TensorSumLayer {
public:
  TensorSumLayer() = default;
  TensorSumLayer(Shape input_shape, Shape output_shape, std::vector<Branch> branches);

  const Shape &input_shape() const { return input_shape_; }
  const Shape &output_shape() const { return output_shape_; }
  std::size_t branch_count() const { return branches_.size(); }
  std::size_t mode_count() const { return input_shape_.size(); }
  const std::vector<Branch> &branches() const { return branches_; }

  /// Mutable weights for learning. Shapes must not change.
  DenseMatrix &weights(std::size_t branch, std::size_t mode) { return branches_.at(branch).at(mode).weights; }
  const DenseMatrix &weights(std::size_t branch, std::size_t mode) const {
    return branches_.at(branch).at(mode).weights;
  }

  FactorGrid effective_factors() const;

  DenseTensor forward(const DenseTensor &x) const;
  /// Exact transpose of forward under row-major vectorization.
  DenseTensor forward_transposed(const DenseTensor &y) const;
  /// Dense matrix acting on vec(x).
  DenseMatrix materialize(std::size_t cap = kDefaultMaterializationCap) const;

  /// dL/d(weights) for every branch and mode, given the layer input and dL/d(output).
  FactorGrid weight_gradients(const DenseTensor &x, const DenseTensor &output_gradient) const;

  std::size_t stored_weight_count() const;

private:
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Branch> branches_;
};

/// Per-branch, per-mode block sizes; 0 or 1 means identity basis.
using BasisPlan = std::vector<std::vector<std::size_t>>;

/// Plan applying `blocks[t]` to the first two modes of branch t, identity elsewhere.
BasisPlan spatial_block_plan(const std::vector<std::size_t> &blocks, std::size_t modes);

enum class WeightInit { gaussian, identity };

struct OperatorConfig {
  Shape input_shape;
  Shape output_shape;
  std::size_t branches = 1;
  BasisPlan basis_plan; ///< empty: identity bases everywhere
  std::uint64_t seed = 0;
  WeightInit init = WeightInit::gaussian;
};

/// Generalized tensor-summation sensing operator P = sum_t ⊗_j Psi*_j^(t) Omega'_j^(t).
struct TensorSumOperator {
  OperatorConfig config;
  TensorSumLayer layer;

  const Shape &input_shape() const { return layer.input_shape(); }
  const Shape &output_shape() const { return layer.output_shape(); }
  std::size_t branch_count() const { return layer.branch_count(); }
};

/// Gaussian weights have variance 1/n_j per mode; draws are deterministic in `seed`.
TensorSumOperator build_operator(const OperatorConfig &config);

DenseTensor apply(const TensorSumOperator &op, const DenseTensor &signal);
DenseMatrix materialize(const TensorSumOperator &op, std::size_t cap = kDefaultMaterializationCap);
DenseTensor transpose_apply(const TensorSumOperator &op, const DenseTensor &measurement);

struct AdjointInit {
  enum class Kind { transpose, gaussian } kind = Kind::transpose;
  std::uint64_t seed = 0;
};

/// Learnable proxy operator: S~ = sum_t Y ×_1 (Omega_1 B*_1) ... ×_J (Omega_J B*_J).
struct AdjointOperator {
  AdjointInit init;
  BasisPlan basis_plan;
  TensorSumLayer layer;

  /// Measurement shape consumed.
  const Shape &input_shape() const { return layer.input_shape(); }
  /// Signal shape produced.
  const Shape &output_shape() const { return layer.output_shape(); }
};

AdjointOperator build_adjoint(const TensorSumOperator &op, const AdjointInit &init);
DenseTensor proxy(const AdjointOperator &adj, const DenseTensor &measurement);

struct ParamCount {
  std::uint64_t factorized = 0;
  std::uint64_t dense_equivalent = 0;
};

ParamCount param_count(const Shape &input_shape, const Shape &output_shape, std::size_t branches);
ParamCount param_count(const TensorSumOperator &op);

} // namespace tscs
