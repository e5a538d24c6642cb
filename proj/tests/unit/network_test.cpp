#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "rgflow/error.hpp"
#include "rgflow/network.hpp"
#include "rgflow/random.hpp"
#include "rgflow/stats.hpp"

using namespace rgflow;

namespace {

Architecture arch(std::vector<int> hidden, Activation a, int n_in = 2, int n_out = 1) {
  return Architecture{n_in, n_out, std::move(hidden), a};
}

double loss_of(const NetworkParams& p, const Dataset& d) {
  return mse_loss(forward(p, d.inputs).output(), d.targets);
}

double max_grad_error(NetworkParams p, const Dataset& d) {
  const Gradients g = backward(p, forward(p, d.inputs), d.targets);
  const double h = 1e-6;
  const double floor = 1e-2 * std::max(1.0, g.loss);
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = loss_of(p, d);
    param = saved - h;
    const double down = loss_of(p, d);
    param = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), floor}));
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) check(p.weights[l].data()[i], g.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) check(p.biases[l][i], g.biases[l][i]);
  }
  return worst;
}

}  // namespace

TEST(Init, ZeroBiasVarianceGivesZeroBiases) {
  const NetworkParams p = init_params(arch({16, 16}, Activation::tanh()), {0.0, 1.0}, 3);
  for (const auto& b : p.biases) EXPECT_TRUE(b.isZero(0.0));
}

TEST(Init, ShapesAndFiniteness) {
  const Architecture a = arch({5, 7, 3}, Activation::relu(), 4, 2);
  const NetworkParams p = init_params(a, {0.3, 2.0}, 1);
  ASSERT_EQ(p.weights.size(), 4u);
  for (int l = 1; l <= a.depth(); ++l) {
    const auto& w = p.weights[static_cast<std::size_t>(l - 1)];
    EXPECT_EQ(w.rows(), a.width(l));
    EXPECT_EQ(w.cols(), a.width(l - 1));
    EXPECT_EQ(p.biases[static_cast<std::size_t>(l - 1)].size(), a.width(l));
    EXPECT_TRUE(w.allFinite());
  }
}

TEST(Init, WeightMomentsOn512Square) {
  const double c_w = 2.0;
  const NetworkParams p = init_params(arch({512, 512}, Activation::relu()), {0.0, c_w}, 11);
  const Eigen::MatrixXd& w = p.weights[1];
  const std::vector<double> v(w.data(), w.data() + w.size());
  EXPECT_LT(std::abs(mean(v)), 5.0 * std::sqrt(c_w / 512.0) / 512.0);
  EXPECT_NEAR(sample_variance(v), c_w / 512.0, 0.05 * c_w / 512.0);
}

TEST(Init, BiasVariance) {
  const NetworkParams p = init_params(arch({100000}, Activation::relu()), {0.25, 1.0}, 5);
  const std::vector<double> b(p.biases[0].data(), p.biases[0].data() + p.biases[0].size());
  EXPECT_NEAR(sample_variance(b), 0.25, 0.05 * 0.25);
}

TEST(InitProperty, LayerVarianceWithin5Percent) {
  const NetworkParams p = init_params(arch({400, 300, 350}, Activation::tanh()), {0.0, 1.7}, 8);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Eigen::MatrixXd& w = p.weights[l];
    if (w.size() < 100000) continue;
    const std::vector<double> v(w.data(), w.data() + w.size());
    EXPECT_NEAR(sample_variance(v), 1.7 / static_cast<double>(w.cols()), 0.05 * 1.7 / w.cols()) << l;
  }
}

TEST(InitProperty, Deterministic) {
  const Architecture a = arch({8, 8}, Activation::gelu());
  const NetworkParams p = init_params(a, {0.1, 1.0}, 42);
  const NetworkParams q = init_params(a, {0.1, 1.0}, 42);
  const NetworkParams r = init_params(a, {0.1, 1.0}, 43);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    EXPECT_EQ(p.weights[l], q.weights[l]);
    EXPECT_EQ(p.biases[l], q.biases[l]);
  }
  EXPECT_NE(p.weights[0], r.weights[0]);
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  NetworkParams p = init_params(arch({6}, Activation::tanh()), {0.0, 1.0}, 1);
  for (auto& w : p.weights) w.setZero();
  Eigen::MatrixXd x(2, 3);
  x << 1, -2, 3, 0.5, 7, -1;
  EXPECT_TRUE(forward(p, x).output().isZero(0.0));
}

TEST(Forward, LayerOneKernelMonteCarlo) {
  const double c_w = 1.6;
  const Architecture a = arch({8}, Activation::tanh());
  const Eigen::Vector2d x0(1.0, 0.0);
  std::vector<double> k;
  for (int s = 0; s < 10000; ++s) {
    const ForwardTrace t = forward(init_params(a, {0.0, c_w}, static_cast<std::uint64_t>(s)), x0);
    k.push_back(t.preactivations[0].squaredNorm() / 8.0);
  }
  EXPECT_NEAR(mean(k), c_w / 2.0, 0.05 * c_w / 2.0);
}

TEST(Forward, LinearIsCompositionOfAffines) {
  const NetworkParams p = init_params(arch({5}, Activation::linear(), 3, 2), {0.4, 1.0}, 9);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  const Eigen::MatrixXd hidden = (p.weights[0] * x).colwise() + p.biases[0];
  const Eigen::MatrixXd want = (p.weights[1] * hidden).colwise() + p.biases[1];
  EXPECT_TRUE(forward(p, x).output().isApprox(want, 1e-12));
}

TEST(ForwardProperty, TraceConsistency) {
  for (const Activation& act : Activation::zoo()) {
    const NetworkParams p = init_params(arch({7, 5, 6}, act), {0.2, 1.3}, 4);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
    const ForwardTrace t = forward(p, x);
    for (std::size_t l = 1; l < t.preactivations.size(); ++l) {
      const Eigen::MatrixXd sig = t.preactivations[l - 1].unaryExpr([&act](double v) { return act(v); });
      const Eigen::MatrixXd z = (p.weights[l] * sig).colwise() + p.biases[l];
      EXPECT_LE((z - t.preactivations[l]).cwiseAbs().maxCoeff(), 1e-12) << act.to_string();
      EXPECT_TRUE(sig.isApprox(t.activations[l], 0.0)) << act.to_string();
    }
  }
}

TEST(Forward, ShapeMismatchThrows) {
  const NetworkParams p = init_params(arch({3}, Activation::tanh()), {0.0, 1.0}, 1);
  EXPECT_THROW(forward(p, Eigen::MatrixXd::Ones(3, 2)), DomainError);
}

TEST(Forward, NonFiniteIsFlaggedNotThrown) {
  NetworkParams p = init_params(arch({3}, Activation::repu(4)), {0.0, 1.0}, 1);
  p.weights[0].setConstant(1e200);
  const ForwardTrace t = forward(p, Eigen::Vector2d(1.0, 1.0));
  EXPECT_FALSE(t.finite);
}

TEST(Backward, ZeroResidualGivesZeroGradients) {
  const NetworkParams p = init_params(arch({4, 4}, Activation::tanh()), {0.1, 1.0}, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 6);
  const ForwardTrace t = forward(p, x);
  const Gradients g = backward(p, t, t.output());
  EXPECT_EQ(g.loss, 0.0);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    EXPECT_TRUE(g.weights[l].isZero(0.0));
    EXPECT_TRUE(g.biases[l].isZero(0.0));
  }
}

TEST(Backward, SingleLinearNeuron) {
  NetworkParams p = init_params(arch({}, Activation::linear(), 1, 1), {0.0, 1.0}, 0);
  p.weights[0](0, 0) = 1.0;
  p.biases[0](0) = 0.0;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 1);
  const Gradients g = backward(p, forward(p, x), y);
  EXPECT_DOUBLE_EQ(g.loss, 2.0);
  EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 4.0);
  EXPECT_DOUBLE_EQ(g.biases[0](0), 2.0);
}

TEST(BackwardProperty, FiniteDifferenceGradientCheck) {
  std::vector<Activation> acts;
  for (const Activation& a : Activation::zoo()) {
    if (a.kind() != ActivationKind::Perceptron) acts.push_back(a);
  }
  acts.push_back(Activation::repu(3));
  acts.push_back(Activation::mrepu(3));
  const Dataset d = synth_dataset(6, 77);
  for (const Activation& act : acts) {
    for (const auto& hidden : {std::vector<int>{8}, std::vector<int>{5, 8}}) {
      const NetworkParams p = init_params(arch(hidden, act), {0.05, 1.0}, 13);
      EXPECT_LE(max_grad_error(p, d), 1e-5) << act.to_string() << " depth " << hidden.size() + 1;
    }
  }
}

TEST(SynthDataset, TargetsAreSquaredNorms) {
  const Dataset d = synth_dataset(50, 3);
  ASSERT_EQ(d.inputs.rows(), 2);
  ASSERT_EQ(d.size(), 50);
  for (int i = 0; i < d.size(); ++i) {
    EXPECT_DOUBLE_EQ(d.targets(0, i), d.inputs.col(i).squaredNorm());
  }
}

TEST(SynthDataset, TargetMean) {
  const Dataset d = synth_dataset(100000, 21);
  const std::vector<double> t(d.targets.data(), d.targets.data() + d.targets.size());
  EXPECT_NEAR(mean(t), 2.0, 0.05);
}

TEST(SynthDataset, Deterministic) {
  EXPECT_EQ(synth_dataset(10, 5).inputs, synth_dataset(10, 5).inputs);
  EXPECT_NE(synth_dataset(10, 5).inputs, synth_dataset(10, 6).inputs);
  EXPECT_THROW(synth_dataset(0, 1), DomainError);
}

TEST(Train, ZeroLearningRateKeepsParams) {
  const NetworkParams p = init_params(arch({6}, Activation::tanh()), {0.0, 1.0}, 1);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.0;
  const Dataset d = synth_dataset(32, 1);
  const TrainResult r = train(p, cfg, d);
  ASSERT_EQ(r.losses.size(), 6u);
  for (const LossPoint& lp : r.losses) EXPECT_EQ(lp.train_loss, r.losses[0].train_loss);
  EXPECT_EQ(r.params.weights[0], p.weights[0]);
  EXPECT_FALSE(r.diverged);
}

TEST(Train, ConvexLinearRegression) {
  NetworkParams p = init_params(arch({}, Activation::linear(), 1, 1), {0.0, 1.0}, 0);
  Dataset d;
  d.inputs = Eigen::RowVectorXd::LinSpaced(20, -2.0, 2.0);
  d.targets = 3.0 * d.inputs;
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 0.1;
  const TrainResult r = train(p, cfg, d);
  for (std::size_t e = 1; e < r.losses.size(); ++e) {
    EXPECT_LE(r.losses[e].train_loss, r.losses[e - 1].train_loss * (1.0 + 1e-12) + 1e-25);
  }
  EXPECT_NEAR(r.params.weights[0](0, 0), 3.0, 1e-8);
  EXPECT_NEAR(r.params.biases[0](0), 0.0, 1e-8);
}

TEST(Train, DeterministicAndMinibatch) {
  const NetworkParams p = init_params(arch({8, 8}, Activation::swish()), {0.0, 1.5}, 6);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.seed = 4;
  const Dataset d = synth_dataset(64, 2);
  const TrainResult a = train(p, cfg, d, &d);
  const TrainResult b = train(p, cfg, d, &d);
  ASSERT_EQ(a.losses.size(), b.losses.size());
  for (std::size_t e = 0; e < a.losses.size(); ++e) {
    EXPECT_EQ(a.losses[e].train_loss, b.losses[e].train_loss);
    EXPECT_EQ(a.losses[e].test_loss, b.losses[e].test_loss);
  }
  EXPECT_EQ(a.params.weights[1], b.params.weights[1]);
  EXPECT_LT(a.losses.back().train_loss, a.losses.front().train_loss);
}

TEST(Train, DivergenceIsFlagged) {
  const NetworkParams p = init_params(arch({16, 16}, Activation::repu(3)), {0.0, 20.0}, 6);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 10.0;
  const TrainResult r = train(p, cfg, synth_dataset(32, 1));
  EXPECT_TRUE(r.diverged);
}

TEST(Train, CallbackCanStopRun) {
  const NetworkParams p = init_params(arch({4}, Activation::tanh()), {0.0, 1.0}, 6);
  TrainConfig cfg;
  cfg.epochs = 10;
  std::vector<int> seen;
  const TrainResult r = train(p, cfg, synth_dataset(8, 1), nullptr, [&](int epoch, const NetworkParams&) {
    seen.push_back(epoch);
    return epoch < 3;
  });
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Train, InvalidConfig) {
  TrainConfig cfg;
  cfg.epochs = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.epochs = 1;
  cfg.dataset_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  const NetworkParams p = init_params(arch({3, 4}, Activation::parse("leaky_relu:alpha=0.1")), {0.2, 1.0}, 3);
  const NetworkParams q = checkpoint_from_json(checkpoint_to_json(p));
  EXPECT_EQ(q.arch, p.arch);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    EXPECT_EQ(q.weights[l], p.weights[l]);
    EXPECT_EQ(q.biases[l], p.biases[l]);
  }
  const auto path = std::filesystem::temp_directory_path() / "rgflow_checkpoint_test.json";
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path).weights[2], p.weights[2]);
  std::filesystem::remove(path);
  EXPECT_THROW(checkpoint_from_json("{\"layers\": 3}"), ConfigError);
}
