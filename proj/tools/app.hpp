#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rgflow/activation.hpp"
#include "rgflow/criticality.hpp"
#include "rgflow/ensemble.hpp"

namespace rgflow::app {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kNumericalFailure = 3,
};

enum class Command { Suscept, Flow, Classify, InitEnsemble, TrainEnsemble };

std::string_view command_name(Command c) noexcept;
/// Throws ConfigError for unknown names.
Command parse_command(std::string_view name);

/// Everything one run needs. Which fields matter depends on `command`; the
/// JSON form only accepts the keys that command uses.
struct ExperimentConfig {
  Command command = Command::Suscept;
  Activation activation;
  InitHyperparams hp;
  int quad_order = kDefaultQuadratureOrder;
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path out = ".";

  // suscept
  double k_min = 1e-6;
  double k_max = 1e3;
  int k_points = 50;
  std::vector<double> k_values;  // overrides the log grid when non-empty

  // flow
  double k1 = 1.0;
  double dk1 = 0.0;
  double dk2 = 0.0;
  int layers = 10;

  // ensembles
  int n_in = 2;
  int n_out = 1;
  std::vector<int> hidden_widths = std::vector<int>(10, 512);
  int n_models = 100;
  std::vector<double> probe_input{1.0, 0.0};
  int data_samples = 100;

  // train-ensemble
  TrainConfig train;
  std::vector<int> record_epochs{0, 250, 500, 750, 1000};

  EnsembleSpec ensemble_spec() const;
  void validate() const;
};

/// Parses a config document. Also accepts a run summary ({"config", "results"})
/// so that any emitted summary reproduces its run. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Runs the command, writing its files under cfg.out. Returns an ExitCode;
/// progress and warnings go to `log`.
int run(const ExperimentConfig& cfg, std::ostream& log);

/// Full command-line entry point (argv[1] is the subcommand).
int main_with_args(int argc, char** argv, std::ostream& log);

}  // namespace rgflow::app
