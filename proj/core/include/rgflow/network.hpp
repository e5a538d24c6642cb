#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rgflow/activation.hpp"
#include "rgflow/criticality.hpp"

namespace rgflow {

/// Fully connected network shape. Layers are numbered 1..depth(); the last
/// affine layer produces the output and has no activation.
struct Architecture {
  int n_in = 2;
  int n_out = 1;
  std::vector<int> hidden_widths;
  Activation activation;

  int depth() const noexcept { return static_cast<int>(hidden_widths.size()) + 1; }
  /// Width of layer `l`; layer 0 is the input.
  int width(int l) const;
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct NetworkParams {
  Architecture arch;
  /// weights[l-1] is W^(l), shape width(l) x width(l-1).
  std::vector<Eigen::MatrixXd> weights;
  /// biases[l-1] is b^(l), length width(l).
  std::vector<Eigen::VectorXd> biases;
};

/// Samples b ~ N(0, C_b) and W_ij ~ N(0, C_W / n_{l-1}), layer by layer and
/// row-major within a layer. Deterministic in `seed`.
NetworkParams init_params(const Architecture& arch, const InitHyperparams& hp, std::uint64_t seed);

/// Activations are stored column-per-sample: every matrix is (width x batch).
struct ForwardTrace {
  /// activations[0] is the input batch; activations[l] = sigma(z^(l)) for hidden l.
  std::vector<Eigen::MatrixXd> activations;
  /// preactivations[l-1] is z^(l), l = 1..depth.
  std::vector<Eigen::MatrixXd> preactivations;
  bool finite = true;

  const Eigen::MatrixXd& output() const { return preactivations.back(); }
};

/// Throws DomainError on an input-dimension mismatch. Non-finite values are
/// propagated and reported through `finite`.
ForwardTrace forward(const NetworkParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
  bool finite = true;
};

/// MSE loss (1/2N) sum ||f - y||^2 over a batch of N columns.
double mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                const Eigen::Ref<const Eigen::MatrixXd>& targets);

/// Exact gradients of `mse_loss` for the batch that produced `trace`.
Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                   const Eigen::Ref<const Eigen::MatrixXd>& targets);

struct Dataset {
  Eigen::MatrixXd inputs;   // n_in x n
  Eigen::MatrixXd targets;  // n_out x n

  int size() const noexcept { return static_cast<int>(inputs.cols()); }
};

/// n points (x, y) with x, y ~ N(0, 1) i.i.d. and target x^2 + y^2.
Dataset synth_dataset(int n, std::uint64_t seed);

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-3;
  /// 0 means full batch.
  int batch_size = 0;
  int dataset_size = 1024;
  int test_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossPoint {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
};

struct TrainResult {
  NetworkParams params;
  /// Loss after `epoch` updates, for epoch = 0..epochs (shorter if diverged).
  std::vector<LossPoint> losses;
  bool diverged = false;
};

/// Called with the parameters after `epoch` updates; returning false stops
/// training and marks the run diverged.
using EpochCallback = std::function<bool(int epoch, const NetworkParams& params)>;

/// Gradient descent on the MSE loss. Stops with `diverged` set as soon as the
/// training loss becomes non-finite.
TrainResult train(NetworkParams params, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset* test_set = nullptr, const EpochCallback& on_epoch = {});

// Checkpoints: JSON with an architecture header followed by layer-ordered,
// row-major weight matrices and bias vectors as 64-bit floats.
std::string checkpoint_to_json(const NetworkParams& params);
NetworkParams checkpoint_from_json(std::string_view text);
void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rgflow
