#pragma once

#include "tscs/operators.hpp"
#include "tscs/rng.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tscs {

/// Weights of the proxy objective  L1 + alpha * R, where R is the edge-aware
/// sparse gradient prior  sum exp(-beta |grad ref|^gamma) |grad est|^gamma.
struct LossConfig {
  double alpha = 0.005;
  double beta = 10.0;
  double gamma = 0.9;
  /// |g| is smoothed to sqrt(g^2 + epsilon) inside the prior.
  double epsilon = 1e-8;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  DenseTensor gradient;
};

/// |est - ref|_1 / batch_size and its gradient sgn(est - ref) / batch_size, sgn(0) = 0.
LossValue l1_loss(const DenseTensor &est, const DenseTensor &ref, std::size_t batch_size = 1);

/// Edge-aware prior over forward differences along modes 0 and 1; later modes
/// (e.g. colour) are not differentiated. Each term carries
/// (g^2 + eps)^(gamma/2) - eps^(gamma/2), so constant inputs score exactly 0.
double gradient_prior(const DenseTensor &est, const DenseTensor &ref, const LossConfig &cfg);
DenseTensor gradient_prior_grad(const DenseTensor &est, const DenseTensor &ref, const LossConfig &cfg);

/// dL/dW for every learnable factor; grids are indexed [branch][mode].
struct GradientBundle {
  FactorGrid sensing;
  FactorGrid adjoint;
  std::optional<DenseTensor> input;
};

/// dL/dS through the sensing operator: the transposed tensor sum.
DenseTensor tensor_layer_backward_input(const TensorSumOperator &op, const DenseTensor &output_gradient);

/// dL/dPsi* for each branch and mode, with the fixed bases chained out.
GradientBundle tensor_layer_backward_params(const TensorSumOperator &op, const DenseTensor &signal,
                                            const DenseTensor &output_gradient);

/// dL/dB* of the adjoint operator, given its input measurement.
GradientBundle adjoint_backward_params(const AdjointOperator &adj, const DenseTensor &measurement,
                                       const DenseTensor &output_gradient);

struct ProxyObjective {
  double value = 0.0; ///< l1 + alpha * prior, batch mean
  double l1 = 0.0;
  double prior = 0.0;
  GradientBundle gradients; ///< empty unless requested
};

/// Batch-mean proxy objective of sense -> proxy over `batch`.
ProxyObjective proxy_objective(const TensorSumOperator &op, const AdjointOperator &adj,
                               std::span<const DenseTensor> batch, const LossConfig &cfg, bool with_gradients);

struct LrStage {
  std::size_t epochs = 0;
  double rate = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  /// Consecutive stages; their epoch counts must sum to `epochs`.
  std::vector<LrStage> schedule;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;

  /// Three-stage step schedule: half the epochs at `base`, 30% at base/10, the rest at base/100.
  static std::vector<LrStage> step_schedule(std::size_t epochs, double base);

  void validate() const;
  double rate_at(std::size_t epoch) const;
  std::size_t stage_at(std::size_t epoch) const;
};

struct EpochMetrics {
  std::size_t epoch = 0; ///< 0 is the untrained initialization
  double lr = 0.0;
  double train_objective = 0.0;
  double train_l1 = 0.0;
  double val_l1 = 0.0;
  double val_psnr = 0.0;
};

struct TrainingState {
  std::size_t epoch = 0;
  std::size_t schedule_position = 0;
  std::string rng_state;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  TrainingState state;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
};

struct TrainingDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Deterministic shuffle by seed; the last floor(fraction * n) indices
/// validate. An empty validation split falls back to the training set.
DatasetSplit split_dataset(std::size_t count, double validation_fraction, std::uint64_t seed);

/// Mini-batch SGD on the proxy objective, updating every Psi* and B* in place.
TrainResult train(TensorSumOperator &op, AdjointOperator &adj, const std::vector<DenseTensor> &dataset,
                  const LossConfig &loss_cfg, const TrainConfig &train_cfg);

} // namespace tscs
