#include "tscs/learning.hpp"
#include "tscs/metrics.hpp"

#include "test_util.hpp"

#include <cmath>
#include <gtest/gtest.h>

namespace tscs {
namespace {

using test::random_tensor;

constexpr double kStep = 1e-5;

// Normwise relative error max|a - f| / max(|a|, |f|).
double rel_err(std::span<const double> analytic, std::span<const double> numeric) {
  const double scale = std::max(max_abs(analytic), max_abs(numeric));
  return scale == 0.0 ? 0.0 : max_abs_diff(analytic, numeric) / scale;
}

template <typename Loss> std::vector<double> numeric_gradient(std::span<double> params, Loss &&loss) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + kStep;
    const double up = loss();
    params[i] = keep - kStep;
    const double down = loss();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

TensorSumOperator random_operator(Rng &rng, std::size_t branches, bool bases) {
  std::uniform_int_distribution<std::size_t> order_d(2, 3);
  const std::size_t order = order_d(rng);
  OperatorConfig c;
  for (std::size_t j = 0; j < order; ++j) {
    const std::size_t n = j < 2 ? 4 : 3;
    std::uniform_int_distribution<std::size_t> m(1, n);
    c.input_shape.push_back(n);
    c.output_shape.push_back(m(rng));
  }
  c.branches = branches;
  if (bases) c.basis_plan = spatial_block_plan(std::vector<std::size_t>(branches, 2), order);
  c.seed = rng();
  return build_operator(c);
}

// Smooth scalar loss of the measurement: <c, y> + |y|^2 / 2, so dL/dy = c + y.
struct QuadraticProbe {
  DenseTensor c;
  double value(const DenseTensor &y) const { return inner(c.data(), y.data()) + 0.5 * inner(y.data(), y.data()); }
  DenseTensor grad(const DenseTensor &y) const {
    DenseTensor g = y;
    axpy(1.0, c.data(), g.data());
    return g;
  }
};

TEST(L1Loss, Examples) {
  Rng rng(1);
  const auto ref = random_tensor({3, 4}, rng);
  const auto same = l1_loss(ref, ref);
  EXPECT_EQ(same.value, 0.0);
  for (double v : same.gradient.data()) EXPECT_EQ(v, 0.0);
  DenseTensor plus = ref;
  for (auto &v : plus.data()) v += 1.0;
  const auto one = l1_loss(plus, ref);
  EXPECT_NEAR(one.value, 12.0, 1e-12);
  for (double v : one.gradient.data()) EXPECT_EQ(v, 1.0);
  const auto batch = l1_loss(plus, ref, 4);
  EXPECT_NEAR(batch.value, 3.0, 1e-12);
  for (double v : batch.gradient.data()) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(l1_loss(ref, DenseTensor({4, 3})), ShapeError);
}

TEST(L1Loss, FiniteDifferences) {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    auto est = random_tensor({5, 6}, rng);
    const auto ref = random_tensor({5, 6}, rng);
    const auto analytic = l1_loss(est, ref, 3).gradient;
    const auto numeric = numeric_gradient(est.data(), [&] { return l1_loss(est, ref, 3).value; });
    EXPECT_LE(rel_err(analytic.data(), numeric), 1e-5);
  }
}

TEST(GradientPrior, ConstantEstimateScoresZero) {
  Rng rng(3);
  const auto ref = random_tensor({6, 5}, rng);
  DenseTensor est({6, 5});
  for (auto &v : est.data()) v = 0.37;
  const LossConfig cfg;
  EXPECT_EQ(gradient_prior(est, ref, cfg), 0.0);
  const auto grad = gradient_prior_grad(est, ref, cfg);
  for (double v : grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(GradientPrior, EdgesInReferenceDownweight) {
  DenseTensor est({4, 4}), edge_ref({4, 4}), flat_ref({4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      est[i * 4 + j] = j >= 2 ? 1.0 : 0.0;
      edge_ref[i * 4 + j] = j >= 2 ? 1.0 : 0.0;
      flat_ref[i * 4 + j] = 0.5;
    }
  const LossConfig cfg;
  EXPECT_LT(gradient_prior(est, edge_ref, cfg), gradient_prior(est, flat_ref, cfg));
}

TEST(GradientPrior, FixtureMatchesPerPixelSum) {
  const double est_v[16] = {0.1, 0.4, 0.4, 0.9, 0.2, 0.2, 0.7, 0.3, 0.0, 0.5, 0.6, 0.6, 1.0, 0.8, 0.1, 0.4};
  const double ref_v[16] = {0.0, 0.5, 0.5, 1.0, 0.1, 0.3, 0.6, 0.2, 0.1, 0.4, 0.4, 0.7, 0.9, 0.9, 0.0, 0.3};
  const DenseTensor est({4, 4}, std::vector<double>(est_v, est_v + 16));
  const DenseTensor ref({4, 4}, std::vector<double>(ref_v, ref_v + 16));
  const LossConfig cfg{0.005, 10.0, 0.9, 1e-8};
  double expected = 0.0;
  auto term = [&](double g, double r) {
    const double w = std::exp(-10.0 * std::pow(std::abs(r), 0.9));
    return w * (std::pow(g * g + 1e-8, 0.45) - std::pow(1e-8, 0.45));
  };
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i + 1 < 4) expected += term(est_v[(i + 1) * 4 + j] - est_v[i * 4 + j], ref_v[(i + 1) * 4 + j] - ref_v[i * 4 + j]);
      if (j + 1 < 4) expected += term(est_v[i * 4 + j + 1] - est_v[i * 4 + j], ref_v[i * 4 + j + 1] - ref_v[i * 4 + j]);
    }
  }
  EXPECT_NEAR(gradient_prior(est, ref, cfg), expected, 1e-12);
}

TEST(GradientPrior, ColourModeIsNotDifferentiated) {
  Rng rng(4);
  const auto ref = random_tensor({3, 3, 3}, rng);
  DenseTensor est({3, 3, 3});
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t c = 0; c < 3; ++c) est[p * 3 + c] = static_cast<double>(c);
  EXPECT_EQ(gradient_prior(est, ref, LossConfig{}), 0.0);
}

TEST(GradientPrior, StepEdgeGradientIsLocal) {
  DenseTensor est({8, 1}), ref({8, 1});
  for (std::size_t i = 4; i < 8; ++i) est[i] = 1.0;
  const auto g = gradient_prior_grad(est, ref, LossConfig{});
  for (std::size_t i = 0; i < 8; ++i) {
    if (i == 3 || i == 4) {
      EXPECT_NE(g[i], 0.0);
    } else {
      EXPECT_EQ(g[i], 0.0);
    }
  }
  EXPECT_LT(g[3], 0.0);
  EXPECT_GT(g[4], 0.0);
}

TEST(GradientPrior, RejectsBadOperands) {
  EXPECT_THROW(gradient_prior(DenseTensor({4}), DenseTensor({4}), LossConfig{}), ShapeError);
  EXPECT_THROW(gradient_prior(DenseTensor({4, 4}), DenseTensor({4, 3}), LossConfig{}), ShapeError);
  EXPECT_THROW((LossConfig{0.1, 1.0, 1.5, 1e-8}.validate()), std::invalid_argument);
  EXPECT_THROW((LossConfig{-0.1, 1.0, 0.9, 1e-8}.validate()), std::invalid_argument);
}

TEST(GradientPrior, FiniteDifferences) {
  Rng rng(5);
  const LossConfig cfg{0.005, 10.0, 0.9, 1e-8};
  for (int rep = 0; rep < 10; ++rep) {
    const Shape shape = rep % 3 == 2 ? Shape{5, 4, 3} : Shape{8, 8};
    auto est = random_tensor(shape, rng);
    const auto ref = random_tensor(shape, rng);
    const auto analytic = gradient_prior_grad(est, ref, cfg);
    const auto numeric = numeric_gradient(est.data(), [&] { return gradient_prior(est, ref, cfg); });
    EXPECT_LE(rel_err(analytic.data(), numeric), 1e-4);
  }
}

TEST(BackwardInput, EqualsTransposeAndMaterializedColumns) {
  Rng rng(6);
  const auto op = random_operator(rng, 3, true);
  const auto p = materialize(op);
  DenseTensor e(op.output_shape());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = 1.0;
    const auto col = tensor_layer_backward_input(op, e);
    for (std::size_t c = 0; c < p.cols(); ++c) EXPECT_NEAR(col[c], p(i, c), 1e-12);
    e[i] = 0.0;
  }
  const auto y = random_tensor(op.output_shape(), rng);
  EXPECT_EQ(tensor_layer_backward_input(op, y), transpose_apply(op, y));
}

TEST(BackwardInput, IdentityOperatorPassesThrough) {
  const auto op = build_operator(OperatorConfig{{3, 5}, {3, 5}, 1, {}, 0, WeightInit::identity});
  Rng rng(7);
  const auto g = random_tensor({3, 5}, rng);
  EXPECT_EQ(tensor_layer_backward_input(op, g), g);
}

TEST(BackwardInput, FiniteDifferences) {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const auto op = random_operator(rng, 1 + rep % 3, rep % 2 == 0);
    const QuadraticProbe probe{random_tensor(op.output_shape(), rng)};
    auto s = random_tensor(op.input_shape(), rng);
    const auto analytic = tensor_layer_backward_input(op, probe.grad(apply(op, s)));
    const auto numeric = numeric_gradient(s.data(), [&] { return probe.value(apply(op, s)); });
    EXPECT_LE(rel_err(analytic.data(), numeric), 1e-6);
  }
}

TEST(BackwardParams, ZeroUpstreamGivesZero) {
  Rng rng(9);
  const auto op = random_operator(rng, 2, true);
  const auto b = tensor_layer_backward_params(op, random_tensor(op.input_shape(), rng), DenseTensor(op.output_shape()));
  ASSERT_EQ(b.sensing.size(), 2u);
  for (const auto &row : b.sensing)
    for (const auto &g : row)
      for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(BackwardParams, SingleModeClosedForm) {
  const auto op = build_operator(OperatorConfig{{8}, {3}, 1, {{4}}, 4, {}});
  Rng rng(10);
  const auto s = random_tensor({8}, rng);
  const auto dy = random_tensor({3}, rng);
  const auto g = tensor_layer_backward_params(op, s, dy).sensing[0][0];
  const auto &basis = op.layer.branches()[0][0].basis->matrix;
  const auto bs = matvec(basis, s.data());
  ASSERT_EQ(g.rows(), 3u);
  ASSERT_EQ(g.cols(), 8u);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(g(r, c), dy[r] * bs[c], 1e-14);
}

TEST(BackwardParams, FiniteDifferences) {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    auto op = random_operator(rng, 2, rep % 2 == 1);
    const QuadraticProbe probe{random_tensor(op.output_shape(), rng)};
    const auto s = random_tensor(op.input_shape(), rng);
    const auto grads = tensor_layer_backward_params(op, s, probe.grad(apply(op, s))).sensing;
    for (std::size_t t = 0; t < op.branch_count(); ++t) {
      for (std::size_t j = 0; j < op.input_shape().size(); ++j) {
        auto &w = op.layer.weights(t, j);
        ASSERT_EQ(grads[t][j].rows(), w.rows());
        ASSERT_EQ(grads[t][j].cols(), w.cols());
        const auto numeric = numeric_gradient(w.data(), [&] { return probe.value(apply(op, s)); });
        EXPECT_LE(rel_err(grads[t][j].data(), numeric), 1e-5);
      }
    }
  }
}

TEST(BackwardParams, LinearInUpstreamGradient) {
  Rng rng(12);
  const auto op = random_operator(rng, 3, true);
  const auto s = random_tensor(op.input_shape(), rng);
  const auto d1 = random_tensor(op.output_shape(), rng);
  const auto d2 = random_tensor(op.output_shape(), rng);
  DenseTensor sum = d1;
  axpy(1.0, d2.data(), sum.data());
  const auto g1 = tensor_layer_backward_params(op, s, d1).sensing;
  const auto g2 = tensor_layer_backward_params(op, s, d2).sensing;
  const auto gs = tensor_layer_backward_params(op, s, sum).sensing;
  for (std::size_t t = 0; t < gs.size(); ++t)
    for (std::size_t j = 0; j < gs[t].size(); ++j) {
      DenseMatrix expected = g1[t][j];
      axpy(1.0, g2[t][j].data(), expected.data());
      EXPECT_LE(max_abs_diff(gs[t][j].data(), expected.data()), 1e-12);
    }
  const auto i1 = tensor_layer_backward_input(op, d1);
  const auto i2 = tensor_layer_backward_input(op, d2);
  DenseTensor isum = i1;
  axpy(1.0, i2.data(), isum.data());
  EXPECT_LE(max_abs_diff(tensor_layer_backward_input(op, sum).data(), isum.data()), 1e-12);
}

TEST(AdjointBackward, FiniteDifferences) {
  Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const auto op = random_operator(rng, 1 + rep % 3, rep % 2 == 0);
    auto adj = build_adjoint(op, {AdjointInit::Kind::gaussian, rng()});
    const QuadraticProbe probe{random_tensor(op.input_shape(), rng)};
    const auto y = random_tensor(op.output_shape(), rng);
    const auto grads = adjoint_backward_params(adj, y, probe.grad(proxy(adj, y))).adjoint;
    for (std::size_t t = 0; t < adj.layer.branch_count(); ++t)
      for (std::size_t j = 0; j < adj.layer.mode_count(); ++j) {
        auto &w = adj.layer.weights(t, j);
        const auto numeric = numeric_gradient(w.data(), [&] { return probe.value(proxy(adj, y)); });
        EXPECT_LE(rel_err(grads[t][j].data(), numeric), 1e-5);
      }
  }
}

TEST(ProxyObjective, FullGradientMatchesFiniteDifferences) {
  Rng rng(14);
  const LossConfig cfg{0.005, 10.0, 0.9, 1e-8};
  for (int rep = 0; rep < 10; ++rep) {
    auto op = random_operator(rng, 1 + rep % 3, rep % 2 == 1);
    auto adj = build_adjoint(op, {AdjointInit::Kind::gaussian, rng()});
    std::vector<DenseTensor> batch;
    for (int b = 0; b < 3; ++b) batch.push_back(random_tensor(op.input_shape(), rng));
    const auto obj = proxy_objective(op, adj, batch, cfg, true);
    auto value = [&] { return proxy_objective(op, adj, batch, cfg, false).value; };
    for (std::size_t t = 0; t < op.branch_count(); ++t)
      for (std::size_t j = 0; j < op.input_shape().size(); ++j) {
        EXPECT_LE(rel_err(obj.gradients.sensing[t][j].data(), numeric_gradient(op.layer.weights(t, j).data(), value)),
                  1e-4);
        EXPECT_LE(rel_err(obj.gradients.adjoint[t][j].data(), numeric_gradient(adj.layer.weights(t, j).data(), value)),
                  1e-4);
      }
  }
}

TEST(ProxyObjective, TransposeInitGradientsFiniteForEveryT) {
  Rng rng(15);
  for (std::size_t t : {1u, 3u, 5u}) {
    const auto op = build_operator(OperatorConfig{{8, 8}, {4, 4}, t, {}, t, {}});
    const auto adj = build_adjoint(op, {});
    std::vector<DenseTensor> batch{random_tensor({8, 8}, rng), random_tensor({8, 8}, rng)};
    const auto obj = proxy_objective(op, adj, batch, LossConfig{0.0, 10, 0.9, 1e-8}, true);
    ASSERT_EQ(obj.gradients.sensing.size(), t);
    ASSERT_EQ(obj.gradients.adjoint.size(), t);
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(obj.gradients.sensing[b][j].rows(), 4u);
        EXPECT_EQ(obj.gradients.sensing[b][j].cols(), 8u);
        EXPECT_EQ(obj.gradients.adjoint[b][j].rows(), 8u);
        EXPECT_EQ(obj.gradients.adjoint[b][j].cols(), 4u);
        for (double v : obj.gradients.sensing[b][j].data()) EXPECT_TRUE(std::isfinite(v));
        for (double v : obj.gradients.adjoint[b][j].data()) EXPECT_TRUE(std::isfinite(v));
      }
  }
}

TEST(TrainConfig, StepScheduleShape) {
  const auto s = TrainConfig::step_schedule(100, 1e-3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].epochs, 50u);
  EXPECT_EQ(s[1].epochs, 30u);
  EXPECT_EQ(s[2].epochs, 20u);
  EXPECT_DOUBLE_EQ(s[0].rate, 1e-3);
  EXPECT_DOUBLE_EQ(s[1].rate, 1e-4);
  EXPECT_DOUBLE_EQ(s[2].rate, 1e-5);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.schedule = s;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.rate_at(49), 1e-3);
  EXPECT_DOUBLE_EQ(cfg.rate_at(50), 1e-4);
  EXPECT_DOUBLE_EQ(cfg.rate_at(99), 1e-5);
  cfg.epochs = 90;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_TRUE(TrainConfig::step_schedule(0, 1.0).empty());
}

TEST(SplitDataset, DeterministicDisjointAndCovering) {
  const auto a = split_dataset(50, 0.2, 3);
  const auto b = split_dataset(50, 0.2, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.validation.size(), 10u);
  std::vector<std::size_t> all(a.train);
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
  const auto single = split_dataset(1, 0.5, 0);
  EXPECT_EQ(single.train, (std::vector<std::size_t>{0}));
  EXPECT_EQ(single.validation, single.train);
}

std::vector<DenseTensor> smooth_patches(std::size_t count, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DenseTensor> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double fx = 0.1 + 0.4 * u(rng), fy = 0.1 + 0.4 * u(rng), ph = 6.0 * u(rng), base = 0.3 + 0.4 * u(rng);
    DenseTensor t({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) t[i * n + j] = base + 0.25 * std::sin(fx * i + ph) * std::cos(fy * j);
    out.push_back(std::move(t));
  }
  return out;
}

TEST(Train, ZeroLearningRateLeavesWeightsBitIdentical) {
  auto op = build_operator(OperatorConfig{{8, 8}, {4, 4}, 2, {{4, 4}, {8, 8}}, 1, {}});
  auto adj = build_adjoint(op, {});
  const auto before_op = op.layer.effective_factors();
  const auto before_adj = adj.layer.effective_factors();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.schedule = {{3, 0.0}};
  const auto result = train(op, adj, smooth_patches(10, 8, 1), LossConfig{}, cfg);
  EXPECT_EQ(op.layer.effective_factors(), before_op);
  EXPECT_EQ(adj.layer.effective_factors(), before_adj);
  ASSERT_EQ(result.history.size(), 4u);
  EXPECT_EQ(result.history.front().val_l1, result.history.back().val_l1);
}

TEST(Train, SingleBatchDescentIsMonotone) {
  auto op = build_operator(OperatorConfig{{8, 8}, {4, 4}, 1, {}, 2, {}});
  auto adj = build_adjoint(op, {});
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  cfg.validation_fraction = 0.0;
  cfg.schedule = {{20, 1e-4}};
  const auto result = train(op, adj, smooth_patches(8, 8, 2), LossConfig{}, cfg);
  for (std::size_t e = 1; e < result.history.size(); ++e) {
    EXPECT_LE(result.history[e].train_objective, result.history[e - 1].train_objective) << "epoch " << e;
  }
  EXPECT_LT(result.history.back().train_objective, result.history.front().train_objective);
}

TEST(Train, SingleSampleLearnsIdentity) {
  auto op = build_operator(OperatorConfig{{4, 4}, {4, 4}, 1, {}, 3, {}});
  auto adj = build_adjoint(op, {});
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 1;
  cfg.schedule = TrainConfig::step_schedule(50, 0.03);
  LossConfig loss;
  loss.alpha = 0.0;
  const auto result = train(op, adj, smooth_patches(1, 4, 3), loss, cfg);
  EXPECT_LT(result.history.back().val_l1, 1e-3);
}

TEST(Train, DeterministicUnderSeed) {
  auto run = [] {
    auto op = build_operator(OperatorConfig{{8, 8}, {3, 3}, 1, {}, 5, {}});
    auto adj = build_adjoint(op, {});
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 3;
    cfg.seed = 9;
    cfg.schedule = TrainConfig::step_schedule(4, 0.01);
    const auto r = train(op, adj, smooth_patches(12, 8, 4), LossConfig{}, cfg);
    return std::make_pair(r.history.back().val_l1, op.layer.weights(0, 0));
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, ErrorsAndDivergence) {
  auto op = build_operator(OperatorConfig{{4, 4}, {2, 2}, 1, {}, 0, {}});
  auto adj = build_adjoint(op, {});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.schedule = {{1, 1e300}};
  EXPECT_THROW(train(op, adj, {}, LossConfig{}, cfg), std::invalid_argument);
  EXPECT_THROW(train(op, adj, {DenseTensor({4, 5})}, LossConfig{}, cfg), ShapeError);
  EXPECT_THROW(train(op, adj, smooth_patches(4, 4, 5), LossConfig{}, cfg), TrainingDivergedError);
}

} // namespace
} // namespace tscs
