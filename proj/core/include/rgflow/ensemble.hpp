#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rgflow/criticality.hpp"
#include "rgflow/network.hpp"

namespace rgflow {

/// A model is excluded from a layer onwards once its empirical kernel there is
/// non-finite or exceeds this value.
inline constexpr double kExclusionThreshold = 1e30;

struct EnsembleSpec {
  int n_models = 100;
  Architecture arch;
  InitHyperparams hp;
  /// Model i is initialised from seed master_seed + i.
  std::uint64_t master_seed = 0;
  std::vector<double> probe_input{1.0, 0.0};
  std::optional<TrainConfig> train;
  int threads = 1;

  void validate() const;
};

/// Single-input statistics of one network, indexed by layer - 1.
struct ProbeStats {
  /// Empirical kernel (1/n_l) sum_i z_i^2.
  std::vector<double> kernel;
  /// Mean of z_i^2 z_j^2 over pairs i != j; NaN for width-1 layers.
  std::vector<double> cross;
  /// Mean of sigma'(z_i)^2 over the layer.
  std::vector<double> deriv_sq;
};

/// Statistics for one network and one input, from a full forward pass.
ProbeStats probe_statistics(const NetworkParams& params, std::span<const double> input);

/// Samples a network exactly as `init_params(arch, hp, seed)` would, one row
/// at a time, and records probe statistics. Layers after the model becomes
/// excluded are left NaN and their weights are never drawn.
ProbeStats sample_probe_statistics(const Architecture& arch, const InitHyperparams& hp,
                                   std::uint64_t seed, std::span<const double> input);

struct EnsembleLayerStats {
  int layer = 0;
  int width = 0;
  double mean_k = 0.0;
  double var_k = 0.0;
  /// Connected four-point vertex n_{l-1} (E[z_i^2 z_j^2] - E[z_i^2]^2), i != j.
  double vertex = 0.0;
  /// C_W times the ensemble/width mean of sigma'(z)^2.
  double chi_perp = 0.0;
  int excluded = 0;
  /// False when more than half of the ensemble is excluded.
  bool reliable = true;
};

/// Per-layer reduction over models in index order. Models are missing
/// (std::nullopt) when they have no data at all, e.g. a diverged run.
std::vector<EnsembleLayerStats> aggregate_layers(std::span<const std::optional<ProbeStats>> models,
                                                 const Architecture& arch, double c_w);

/// Index of the first layer (1-based) at which the model is excluded, or
/// depth + 1 when it never is.
int exclusion_layer(const ProbeStats& stats);

struct InitEnsembleResult {
  std::vector<ProbeStats> models;
  std::vector<EnsembleLayerStats> layers;
};

/// Parameter-random ensemble at initialisation for `spec.probe_input`.
InitEnsembleResult run_init_ensemble(const EnsembleSpec& spec);

/// K-hat at `layer` for each model (NaN or > kExclusionThreshold for
/// excluded members).
std::vector<double> empirical_kernel_param_random(const EnsembleSpec& spec, int layer);

/// K-hat per input (rows) and layer (columns) for one fixed network.
Eigen::MatrixXd empirical_kernel_data_random(const NetworkParams& params,
                                             const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// K-hat at `layer` for `n_samples` inputs drawn from N(0, I).
std::vector<double> empirical_kernel_data_random(const NetworkParams& params, int layer,
                                                 int n_samples, std::uint64_t seed);

struct VertexEstimate {
  double value = 0.0;
  bool reliable = true;
};

VertexEstimate empirical_four_point_vertex(const EnsembleSpec& spec, int layer);

/// C_W <sigma'(z)^2> over ensemble and width at `layer`.
double empirical_chi_perp(const EnsembleSpec& spec, int layer);

/// Same estimator over an explicit set of (e.g. trained) networks.
double empirical_chi_perp(std::span<const NetworkParams> networks, std::span<const double> input,
                          double c_w, int layer);

struct TrainingSnapshot {
  int epoch = 0;
  std::vector<EnsembleLayerStats> layers;
};

struct TestPoint {
  double target = 0.0;
  double mean_output = 0.0;
  double std_output = 0.0;
};

struct TrainingExperimentResult {
  std::vector<TrainingSnapshot> snapshots;
  std::vector<TestPoint> test_report;
  /// Ensemble-mean loss curve over members that trained to completion.
  std::vector<LossPoint> mean_losses;
  /// Final test MSE per member; NaN for excluded members.
  std::vector<double> member_test_mse;
  int n_models = 0;
  int excluded = 0;
  double mean_test_mse = 0.0;
  double output_target_correlation = 0.0;
};

/// Training and test sets used by every member of a training ensemble.
std::pair<Dataset, Dataset> make_datasets(const TrainConfig& cfg);

/// Trains every member independently on the same data, captures probe
/// statistics at each epoch in `record_epochs`, and reports ensemble test
/// outputs. A member is excluded when training diverges or its kernel at
/// any recorded epoch exceeds the exclusion threshold.
TrainingExperimentResult run_training_experiment(const EnsembleSpec& spec,
                                                 std::span<const int> record_epochs);

}  // namespace rgflow
