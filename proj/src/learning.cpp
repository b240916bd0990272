#include "tscs/learning.hpp"

#include "tscs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <sstream>

namespace tscs {

namespace {

void require_same_shape(const DenseTensor &a, const DenseTensor &b, const char *what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", what, to_string(a.shape()), to_string(b.shape())));
  }
}

void check_prior_operands(const DenseTensor &est, const DenseTensor &ref) {
  require_same_shape(est, ref, "gradient_prior");
  if (est.order() < 2) throw ShapeError("gradient_prior: needs at least two modes");
}

// Visits every forward difference along `mode` as (index, index of successor).
template <typename Fn> void for_each_difference(const Shape &shape, std::size_t mode, Fn &&fn) {
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < mode; ++i) outer *= shape[i];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[mode];
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t cur = (o * n + i) * inner + k;
        fn(cur, cur + inner);
      }
}

double edge_weight(double ref_diff, const LossConfig &cfg) {
  return std::exp(-cfg.beta * std::pow(std::abs(ref_diff), cfg.gamma));
}

void add_grid(FactorGrid &acc, const FactorGrid &g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t t = 0; t < g.size(); ++t)
    for (std::size_t j = 0; j < g[t].size(); ++j) axpy(1.0, g[t][j].data(), acc[t][j].data());
}

void sgd_step(TensorSumLayer &layer, const FactorGrid &grads, double rate) {
  for (std::size_t t = 0; t < grads.size(); ++t)
    for (std::size_t j = 0; j < grads[t].size(); ++j) axpy(-rate, grads[t][j].data(), layer.weights(t, j).data());
}

double sum_abs_diff(const DenseTensor &a, const DenseTensor &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

} // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("loss config: alpha must be >= 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("loss config: beta must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("loss config: gamma must lie in (0, 1]");
  if (!(epsilon > 0.0)) throw std::invalid_argument("loss config: epsilon must be > 0");
}

LossValue l1_loss(const DenseTensor &est, const DenseTensor &ref, std::size_t batch_size) {
  require_same_shape(est, ref, "l1_loss");
  if (batch_size == 0) throw std::invalid_argument("l1_loss: batch size must be positive");
  const double scale = 1.0 / static_cast<double>(batch_size);
  LossValue out{0.0, DenseTensor(est.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double d = est[i] - ref[i];
    total += std::abs(d);
    out.gradient[i] = d > 0.0 ? scale : d < 0.0 ? -scale : 0.0;
  }
  out.value = total * scale;
  return out;
}

double gradient_prior(const DenseTensor &est, const DenseTensor &ref, const LossConfig &cfg) {
  check_prior_operands(est, ref);
  const double half_gamma = cfg.gamma / 2.0;
  const double bias = std::pow(cfg.epsilon, half_gamma);
  double total = 0.0;
  for (std::size_t mode = 0; mode < 2; ++mode) {
    for_each_difference(est.shape(), mode, [&](std::size_t cur, std::size_t next) {
      const double g = est[next] - est[cur];
      const double w = edge_weight(ref[next] - ref[cur], cfg);
      total += w * (std::pow(g * g + cfg.epsilon, half_gamma) - bias);
    });
  }
  return total;
}

DenseTensor gradient_prior_grad(const DenseTensor &est, const DenseTensor &ref, const LossConfig &cfg) {
  check_prior_operands(est, ref);
  DenseTensor grad(est.shape());
  const double exponent = cfg.gamma / 2.0 - 1.0;
  for (std::size_t mode = 0; mode < 2; ++mode) {
    for_each_difference(est.shape(), mode, [&](std::size_t cur, std::size_t next) {
      const double g = est[next] - est[cur];
      const double w = edge_weight(ref[next] - ref[cur], cfg);
      // dR/dg = gamma W (g^2 + eps)^(gamma/2 - 1) g, scattered through the +-1 stencil.
      const double d = cfg.gamma * w * std::pow(g * g + cfg.epsilon, exponent) * g;
      grad[next] += d;
      grad[cur] -= d;
    });
  }
  return grad;
}

DenseTensor tensor_layer_backward_input(const TensorSumOperator &op, const DenseTensor &output_gradient) {
  return op.layer.forward_transposed(output_gradient);
}

GradientBundle tensor_layer_backward_params(const TensorSumOperator &op, const DenseTensor &signal,
                                            const DenseTensor &output_gradient) {
  GradientBundle b;
  b.sensing = op.layer.weight_gradients(signal, output_gradient);
  return b;
}

GradientBundle adjoint_backward_params(const AdjointOperator &adj, const DenseTensor &measurement,
                                       const DenseTensor &output_gradient) {
  GradientBundle b;
  b.adjoint = adj.layer.weight_gradients(measurement, output_gradient);
  return b;
}

ProxyObjective proxy_objective(const TensorSumOperator &op, const AdjointOperator &adj,
                               std::span<const DenseTensor> batch, const LossConfig &cfg, bool with_gradients) {
  if (batch.empty()) throw std::invalid_argument("proxy_objective: empty batch");
  const std::size_t k = batch.size();
  const double inv_k = 1.0 / static_cast<double>(k);
  ProxyObjective out;
  for (const auto &signal : batch) {
    const auto measurement = apply(op, signal);
    const auto estimate = proxy(adj, measurement);
    auto l1 = l1_loss(estimate, signal, k);
    out.l1 += l1.value;
    if (cfg.alpha > 0.0) out.prior += inv_k * gradient_prior(estimate, signal, cfg);
    if (!with_gradients) continue;

    DenseTensor d_estimate = std::move(l1.gradient);
    if (cfg.alpha > 0.0) axpy(cfg.alpha * inv_k, gradient_prior_grad(estimate, signal, cfg).data(), d_estimate.data());
    add_grid(out.gradients.adjoint, adj.layer.weight_gradients(measurement, d_estimate));
    const auto d_measurement = adj.layer.forward_transposed(d_estimate);
    add_grid(out.gradients.sensing, op.layer.weight_gradients(signal, d_measurement));
  }
  out.value = out.l1 + cfg.alpha * out.prior;
  return out;
}

std::vector<LrStage> TrainConfig::step_schedule(std::size_t epochs, double base) {
  const std::size_t first = epochs / 2;
  const std::size_t second = (epochs * 3) / 10;
  const std::size_t third = epochs - first - second;
  std::vector<LrStage> stages;
  if (first) stages.push_back({first, base});
  if (second) stages.push_back({second, base / 10.0});
  if (third) stages.push_back({third, base / 100.0});
  return stages;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train config: batch size must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train config: validation fraction must lie in [0, 1)");
  }
  std::size_t covered = 0;
  for (const auto &s : schedule) {
    if (!(s.rate >= 0.0) || !std::isfinite(s.rate)) throw std::invalid_argument("train config: invalid learning rate");
    covered += s.epochs;
  }
  if (covered != epochs) {
    throw std::invalid_argument(
        fmt::format("train config: schedule covers {} epochs, training runs {}", covered, epochs));
  }
}

std::size_t TrainConfig::stage_at(std::size_t epoch) const {
  std::size_t end = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    end += schedule[i].epochs;
    if (epoch < end) return i;
  }
  return schedule.empty() ? 0 : schedule.size() - 1;
}

double TrainConfig::rate_at(std::size_t epoch) const {
  return schedule.empty() ? 0.0 : schedule[stage_at(epoch)].rate;
}

DatasetSplit split_dataset(std::size_t count, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0));
  for (std::size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(count)));
  if (n_val >= count) n_val = count - 1;
  DatasetSplit split;
  split.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
  split.validation.assign(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
  if (split.validation.empty()) split.validation = split.train;
  return split;
}

TrainResult train(TensorSumOperator &op, AdjointOperator &adj, const std::vector<DenseTensor> &dataset,
                  const LossConfig &loss_cfg, const TrainConfig &train_cfg) {
  loss_cfg.validate();
  train_cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].shape() != op.input_shape()) {
      throw ShapeError(fmt::format("train: sample {} has shape {}, operator expects {}", i,
                                   to_string(dataset[i].shape()), to_string(op.input_shape())));
    }
  }
  if (adj.input_shape() != op.output_shape() || adj.output_shape() != op.input_shape()) {
    throw ShapeError("train: adjoint is not shape-compatible with the sensing operator");
  }

  const auto split = split_dataset(dataset.size(), train_cfg.validation_fraction, train_cfg.seed);
  TrainResult result;
  result.train_count = split.train.size();
  result.validation_count = split.validation.size();

  auto evaluate = [&](std::size_t epoch, double lr) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    std::vector<DenseTensor> train_set;
    train_set.reserve(split.train.size());
    for (auto i : split.train) train_set.push_back(dataset[i]);
    const auto obj = proxy_objective(op, adj, train_set, loss_cfg, false);
    m.train_objective = obj.value;
    m.train_l1 = obj.l1;
    double l1 = 0.0;
    double db = 0.0;
    for (auto i : split.validation) {
      const auto estimate = proxy(adj, apply(op, dataset[i]));
      l1 += sum_abs_diff(estimate, dataset[i]);
      db += psnr(estimate, dataset[i], 1.0);
    }
    const double nv = static_cast<double>(split.validation.size());
    m.val_l1 = l1 / nv;
    m.val_psnr = db / nv;
    if (!std::isfinite(m.train_objective) || std::isnan(m.val_l1)) {
      throw TrainingDivergedError(fmt::format("training diverged at epoch {} (objective {})", epoch, m.train_objective));
    }
    return m;
  };

  result.history.push_back(evaluate(0, 0.0));

  Rng rng(derive_seed(train_cfg.seed, 1));
  std::vector<std::size_t> order = split.train;
  std::vector<DenseTensor> batch;
  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double lr = train_cfg.rate_at(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + train_cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      const auto obj = proxy_objective(op, adj, batch, loss_cfg, true);
      if (!std::isfinite(obj.value)) {
        throw TrainingDivergedError(
            fmt::format("training diverged at epoch {}, batch starting {} (objective {})", epoch + 1, start, obj.value));
      }
      sgd_step(op.layer, obj.gradients.sensing, lr);
      sgd_step(adj.layer, obj.gradients.adjoint, lr);
    }
    result.history.push_back(evaluate(epoch + 1, lr));
  }

  std::ostringstream rng_state;
  rng_state << rng;
  result.state = TrainingState{train_cfg.epochs, train_cfg.stage_at(train_cfg.epochs ? train_cfg.epochs - 1 : 0),
                               rng_state.str()};
  return result;
}

} // namespace tscs
