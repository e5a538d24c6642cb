#include "app.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "csv.hpp"
#include "rgflow/error.hpp"

namespace rgflow::app {

using nlohmann::json;

namespace {

const std::set<std::string>& allowed_keys(Command c) {
  static const std::set<std::string> suscept{"command", "activation", "c_w",     "c_b",
                                             "seed",    "threads",    "out",     "quad_order",
                                             "k_min",   "k_max",      "k_points", "k_values"};
  static const std::set<std::string> flow{"command", "activation", "c_w", "c_b", "seed",
                                          "threads", "out",        "quad_order", "k1",
                                          "dk1",     "dk2",        "layers"};
  static const std::set<std::string> classify{"command", "activation", "seed",
                                              "threads", "out",        "quad_order"};
  static const std::set<std::string> init{"command",      "activation",  "c_w",
                                          "c_b",          "seed",        "threads",
                                          "out",          "n_in",        "n_out",
                                          "hidden_widths", "n_models",   "probe_input",
                                          "data_samples"};
  static const std::set<std::string> train{
      "command",       "activation", "c_w",         "c_b",          "seed",
      "threads",       "out",        "n_in",        "n_out",        "hidden_widths",
      "n_models",      "probe_input", "epochs",     "learning_rate", "batch_size",
      "train_size",    "test_size",  "record_epochs"};
  switch (c) {
    case Command::Suscept:
      return suscept;
    case Command::Flow:
      return flow;
    case Command::Classify:
      return classify;
    case Command::InitEnsemble:
      return init;
    case Command::TrainEnsemble:
      return train;
  }
  return suscept;
}

template <class T>
void read(const json& doc, const char* key, T& into) {
  if (!doc.contains(key)) return;
  try {
    into = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json summary(const ExperimentConfig& cfg, json results) {
  return {{"config", config_to_json(cfg)}, {"results", std::move(results)}};
}

json layer_json(const EnsembleLayerStats& s) {
  return {{"layer", s.layer},       {"width", s.width},       {"mean_K", s.mean_k},
          {"var_K", s.var_k},       {"V_hat", s.vertex},      {"chi_perp_hat", s.chi_perp},
          {"excluded", s.excluded}, {"reliable", s.reliable}};
}

EvalOptions eval_options(const ExperimentConfig& cfg) { return {cfg.quad_order, Route::Auto}; }

int run_suscept(const ExperimentConfig& cfg, std::ostream& log) {
  const std::vector<double> grid =
      cfg.k_values.empty() ? log_grid(cfg.k_min, cfg.k_max, cfg.k_points) : cfg.k_values;
  CsvWriter csv(cfg.out / "suscept.csv", {"K", "chi_par", "chi_perp", "ratio", "g", "h"});
  int failures = 0;
  for (double k : grid) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SusceptibilityPoint sp{k, nan, nan, nan, nan};
    try {
      sp = susceptibility_point(cfg.activation, cfg.hp, k, eval_options(cfg));
    } catch (const OverflowError& e) {
      ++failures;
      log << "warning: K=" << format_real(k) << ": " << e.what() << '\n';
    }
    const double ratio = sp.chi_perp != 0.0 ? sp.chi_par / sp.chi_perp : nan;
    csv << k << sp.chi_par << sp.chi_perp << ratio << sp.g << sp.h;
    csv.end_row();
  }
  write_json(cfg.out / "summary.json",
             summary(cfg, {{"rows", grid.size()}, {"failed_rows", failures}}));
  return failures == static_cast<int>(grid.size()) ? kNumericalFailure : kSuccess;
}

int run_flow(const ExperimentConfig& cfg, std::ostream&) {
  const KernelFlowTrace trace =
      flow(cfg.activation, cfg.hp, cfg.k1, cfg.dk1, cfg.dk2, cfg.layers, eval_options(cfg));
  CsvWriter csv(cfg.out / "flow.csv",
                {"layer", "K00", "dK1", "dK2", "chi_par", "chi_perp", "V", "status"});
  for (const FlowLayer& row : trace.layers) {
    csv << row.layer << row.k00 << row.dk1 << row.dk2 << row.chi_par << row.chi_perp << row.vertex
        << status_name(row.status);
    csv.end_row();
  }
  write_json(cfg.out / "summary.json",
             summary(cfg, {{"layers_computed", trace.layers.size()},
                           {"status", status_name(trace.layers.back().status)}}));
  return kSuccess;
}

int run_classify(const ExperimentConfig& cfg, std::ostream&) {
  const Classification c = classify_universality(cfg.activation, eval_options(cfg));
  json evidence = json::array();
  for (const EvidencePoint& e : c.evidence) {
    evidence.push_back({{"K", e.k}, {"chi_par", e.chi_par}, {"chi_perp", e.chi_perp}, {"ratio", e.ratio}});
  }
  const json record{{"activation", cfg.activation.to_string()},
                    {"class", class_name(c.universality)},
                    {"reason", c.reason},
                    {"evidence", evidence}};
  write_json(cfg.out / "classify.json", record);
  write_json(cfg.out / "summary.json", summary(cfg, {{"class", class_name(c.universality)}}));
  return kSuccess;
}

void write_layer_stats(CsvWriter& csv, const std::vector<EnsembleLayerStats>& layers) {
  for (const EnsembleLayerStats& s : layers) {
    csv << s.layer << s.mean_k << s.var_k << s.vertex << s.chi_perp << s.excluded;
    csv.end_row();
  }
}

int run_init_ensemble_cmd(const ExperimentConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = cfg.ensemble_spec();
  const InitEnsembleResult result = run_init_ensemble(spec);

  CsvWriter stats(cfg.out / "init_layer_stats.csv",
                  {"layer", "mean_K", "var_K", "V_hat", "chi_perp_hat", "excluded"});
  write_layer_stats(stats, result.layers);

  CsvWriter param(cfg.out / "init_param_kernels.csv", {"model", "layer", "K_hat"});
  for (std::size_t m = 0; m < result.models.size(); ++m) {
    for (std::size_t l = 0; l < result.models[m].kernel.size(); ++l) {
      param << static_cast<int>(m) << static_cast<int>(l + 1) << result.models[m].kernel[l];
      param.end_row();
    }
  }

  const NetworkParams fixed = init_params(spec.arch, spec.hp, spec.master_seed);
  CsvWriter data(cfg.out / "init_data_kernels.csv", {"sample", "layer", "K_hat"});
  for (int l = 1; l <= spec.arch.depth(); ++l) {
    const std::vector<double> k =
        empirical_kernel_data_random(fixed, l, cfg.data_samples, spec.master_seed);
    for (std::size_t s = 0; s < k.size(); ++s) {
      data << static_cast<int>(s) << l << k[s];
      data.end_row();
    }
  }

  json layers = json::array();
  for (const auto& s : result.layers) layers.push_back(layer_json(s));
  write_json(cfg.out / "summary.json", summary(cfg, {{"layers", layers}}));

  if (result.layers.back().excluded == spec.n_models) {
    log << "error: every model overflowed before the last layer\n";
    return kNumericalFailure;
  }
  return kSuccess;
}

int run_train_ensemble_cmd(const ExperimentConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = cfg.ensemble_spec();
  const TrainingExperimentResult result = run_training_experiment(spec, cfg.record_epochs);

  CsvWriter stats(cfg.out / "train_layer_stats.csv",
                  {"epoch", "layer", "mean_K", "var_K", "V_hat", "chi_perp_hat", "excluded"});
  json snapshots = json::array();
  for (const TrainingSnapshot& snap : result.snapshots) {
    json layers = json::array();
    for (const EnsembleLayerStats& s : snap.layers) {
      stats << snap.epoch << s.layer << s.mean_k << s.var_k << s.vertex << s.chi_perp << s.excluded;
      stats.end_row();
      layers.push_back(layer_json(s));
    }
    snapshots.push_back({{"epoch", snap.epoch}, {"layers", layers}});
  }

  CsvWriter report(cfg.out / "test_report.csv", {"target", "mean_output", "std_output"});
  for (const TestPoint& p : result.test_report) {
    report << p.target << p.mean_output << p.std_output;
    report.end_row();
  }
  CsvWriter losses(cfg.out / "loss_curve.csv", {"epoch", "train_loss", "test_loss"});
  for (const LossPoint& p : result.mean_losses) {
    losses << p.epoch << p.train_loss << p.test_loss;
    losses.end_row();
  }

  write_json(cfg.out / "summary.json",
             summary(cfg, {{"excluded", result.excluded},
                           {"mean_test_mse", result.mean_test_mse},
                           {"output_target_correlation", result.output_target_correlation},
                           {"snapshots", snapshots}}));
  if (result.excluded == result.n_models) {
    log << "error: every ensemble member diverged or overflowed\n";
    return kNumericalFailure;
  }
  return kSuccess;
}

}  // namespace

std::string_view command_name(Command c) noexcept {
  switch (c) {
    case Command::Suscept:
      return "suscept";
    case Command::Flow:
      return "flow";
    case Command::Classify:
      return "classify";
    case Command::InitEnsemble:
      return "init-ensemble";
    case Command::TrainEnsemble:
      return "train-ensemble";
  }
  return "suscept";
}

Command parse_command(std::string_view name) {
  for (Command c : {Command::Suscept, Command::Flow, Command::Classify, Command::InitEnsemble,
                    Command::TrainEnsemble}) {
    if (command_name(c) == name) return c;
  }
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

EnsembleSpec ExperimentConfig::ensemble_spec() const {
  EnsembleSpec spec;
  spec.n_models = n_models;
  spec.arch = Architecture{n_in, n_out, hidden_widths, activation};
  spec.hp = hp;
  spec.master_seed = seed;
  spec.probe_input = probe_input;
  spec.threads = threads;
  if (command == Command::TrainEnsemble) {
    TrainConfig t = train;
    t.seed = seed;
    spec.train = t;
  }
  return spec;
}

void ExperimentConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (quad_order < 2) throw ConfigError("quad_order must be >= 2");
  switch (command) {
    case Command::Suscept:
      hp.validate();
      if (k_values.empty()) {
        if (!(k_min > 0.0) || !(k_max >= k_min) || k_points < 1) {
          throw ConfigError("K grid needs 0 < k_min <= k_max and k_points >= 1");
        }
      }
      for (double k : k_values) {
        if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("K values must be positive");
      }
      break;
    case Command::Flow:
      hp.validate();
      if (!(k1 > 0.0) || !std::isfinite(k1)) throw ConfigError("k1 must be positive");
      if (layers < 1) throw ConfigError("layers must be >= 1");
      break;
    case Command::Classify:
      break;
    case Command::InitEnsemble:
      ensemble_spec().validate();
      if (data_samples < 1) throw ConfigError("data_samples must be >= 1");
      break;
    case Command::TrainEnsemble: {
      const EnsembleSpec spec = ensemble_spec();
      spec.validate();
      if (n_out != 1) throw ConfigError("training experiments regress a scalar target; n_out must be 1");
      if (n_in != 2) throw ConfigError("the synthetic regression task has two inputs; n_in must be 2");
      for (int e : record_epochs) {
        if (e < 0 || e > train.epochs) throw ConfigError("record epochs must lie in [0, epochs]");
      }
      break;
    }
  }
}

ExperimentConfig config_from_json(const json& input) {
  if (!input.is_object()) throw ConfigError("config must be a JSON object");
  const json* doc = &input;
  if (input.contains("config") && input.contains("results") && input.size() == 2) {
    doc = &input.at("config");
    if (!doc->is_object()) throw ConfigError("summary 'config' must be an object");
  }
  if (!doc->contains("command")) throw ConfigError("config needs a 'command'");
  std::string command_text;
  read(*doc, "command", command_text);

  ExperimentConfig cfg;
  cfg.command = parse_command(command_text);
  const auto& allowed = allowed_keys(cfg.command);
  for (const auto& [key, _] : doc->items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' for command " + command_text);
    }
  }
  if (!doc->contains("activation")) throw ConfigError("config needs an 'activation'");
  std::string act;
  read(*doc, "activation", act);
  cfg.activation = Activation::parse(act);
  read(*doc, "c_w", cfg.hp.c_w);
  read(*doc, "c_b", cfg.hp.c_b);
  read(*doc, "seed", cfg.seed);
  read(*doc, "threads", cfg.threads);
  std::string out = cfg.out.string();
  read(*doc, "out", out);
  cfg.out = out;
  read(*doc, "quad_order", cfg.quad_order);
  read(*doc, "k_min", cfg.k_min);
  read(*doc, "k_max", cfg.k_max);
  read(*doc, "k_points", cfg.k_points);
  read(*doc, "k_values", cfg.k_values);
  read(*doc, "k1", cfg.k1);
  read(*doc, "dk1", cfg.dk1);
  read(*doc, "dk2", cfg.dk2);
  read(*doc, "layers", cfg.layers);
  read(*doc, "n_in", cfg.n_in);
  read(*doc, "n_out", cfg.n_out);
  read(*doc, "hidden_widths", cfg.hidden_widths);
  read(*doc, "n_models", cfg.n_models);
  read(*doc, "probe_input", cfg.probe_input);
  read(*doc, "data_samples", cfg.data_samples);
  read(*doc, "epochs", cfg.train.epochs);
  read(*doc, "learning_rate", cfg.train.learning_rate);
  read(*doc, "batch_size", cfg.train.batch_size);
  read(*doc, "train_size", cfg.train.dataset_size);
  read(*doc, "test_size", cfg.train.test_size);
  read(*doc, "record_epochs", cfg.record_epochs);
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc{{"command", command_name(cfg.command)},
           {"activation", cfg.activation.to_string()},
           {"seed", cfg.seed},
           {"threads", cfg.threads},
           {"out", cfg.out.string()}};
  if (cfg.command != Command::Classify) {
    doc["c_w"] = cfg.hp.c_w;
    doc["c_b"] = cfg.hp.c_b;
  }
  switch (cfg.command) {
    case Command::Suscept:
      doc["quad_order"] = cfg.quad_order;
      doc["k_min"] = cfg.k_min;
      doc["k_max"] = cfg.k_max;
      doc["k_points"] = cfg.k_points;
      if (!cfg.k_values.empty()) doc["k_values"] = cfg.k_values;
      break;
    case Command::Flow:
      doc["quad_order"] = cfg.quad_order;
      doc["k1"] = cfg.k1;
      doc["dk1"] = cfg.dk1;
      doc["dk2"] = cfg.dk2;
      doc["layers"] = cfg.layers;
      break;
    case Command::Classify:
      doc["quad_order"] = cfg.quad_order;
      break;
    case Command::InitEnsemble:
    case Command::TrainEnsemble:
      doc["n_in"] = cfg.n_in;
      doc["n_out"] = cfg.n_out;
      doc["hidden_widths"] = cfg.hidden_widths;
      doc["n_models"] = cfg.n_models;
      doc["probe_input"] = cfg.probe_input;
      if (cfg.command == Command::InitEnsemble) {
        doc["data_samples"] = cfg.data_samples;
      } else {
        doc["epochs"] = cfg.train.epochs;
        doc["learning_rate"] = cfg.train.learning_rate;
        doc["batch_size"] = cfg.train.batch_size;
        doc["train_size"] = cfg.train.dataset_size;
        doc["test_size"] = cfg.train.test_size;
        doc["record_epochs"] = cfg.record_epochs;
      }
      break;
  }
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

int run(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  switch (cfg.command) {
    case Command::Suscept:
      return run_suscept(cfg, log);
    case Command::Flow:
      return run_flow(cfg, log);
    case Command::Classify:
      return run_classify(cfg, log);
    case Command::InitEnsemble:
      return run_init_ensemble_cmd(cfg, log);
    case Command::TrainEnsemble:
      return run_train_ensemble_cmd(cfg, log);
  }
  return kSuccess;
}

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> quad_order;
  std::optional<std::string> activation;
  std::optional<double> c_w;
  std::optional<double> c_b;
  std::optional<double> k_min, k_max, k1, dk1, dk2, learning_rate;
  std::optional<int> k_points, layers, n_models, width, hidden, epochs, train_size;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config file");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--seed", o.seed, "Master seed");
  sub->add_option("--threads", o.threads, "Worker threads (1 = sequential reference)");
  sub->add_option("--quad-order", o.quad_order, "Gauss-Hermite order");
  sub->add_option("--activation", o.activation, "Activation, e.g. repu:p=2");
}

}  // namespace

int main_with_args(int argc, char** argv, std::ostream& log) {
  CLI::App cli{"Criticality analysis and ensemble simulation of deep fully connected networks"};
  cli.require_subcommand(1);
  Overrides o;

  auto* suscept = cli.add_subcommand("suscept", "Susceptibilities over a K grid (CSV)");
  auto* flow_cmd = cli.add_subcommand("flow", "Infinite-width kernel flow (CSV)");
  auto* classify = cli.add_subcommand("classify", "Universality class (JSON)");
  auto* init = cli.add_subcommand("init-ensemble", "Empirical kernels at initialisation");
  auto* train = cli.add_subcommand("train-ensemble", "Kernel statistics during training");
  for (auto* sub : {suscept, flow_cmd, classify, init, train}) add_common(sub, o);
  for (auto* sub : {suscept, flow_cmd, init, train}) {
    sub->add_option("--cw", o.c_w, "Rescaled weight variance C_W");
    sub->add_option("--cb", o.c_b, "Bias variance C_b");
  }
  suscept->add_option("--k-min", o.k_min);
  suscept->add_option("--k-max", o.k_max);
  suscept->add_option("--k-points", o.k_points);
  flow_cmd->add_option("--k1", o.k1, "Layer-1 kernel");
  flow_cmd->add_option("--dk1", o.dk1);
  flow_cmd->add_option("--dk2", o.dk2);
  flow_cmd->add_option("--layers", o.layers);
  for (auto* sub : {init, train}) {
    sub->add_option("--models", o.n_models, "Ensemble size");
    sub->add_option("--width", o.width, "Width of every hidden layer");
    sub->add_option("--hidden", o.hidden, "Number of hidden layers");
  }
  train->add_option("--epochs", o.epochs);
  train->add_option("--lr", o.learning_rate);
  train->add_option("--train-size", o.train_size);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kConfigError;
  }

  CLI::App* chosen = cli.get_subcommands().front();
  try {
    ExperimentConfig cfg;
    if (!o.config.empty()) {
      cfg = load_config(o.config);
      if (command_name(cfg.command) != chosen->get_name()) {
        throw ConfigError("config is for '" + std::string(command_name(cfg.command)) +
                          "' but the subcommand is '" + chosen->get_name() + "'");
      }
    } else {
      cfg.command = parse_command(chosen->get_name());
      if (!o.activation) throw ConfigError("--activation or --config is required");
    }
    if (o.activation) cfg.activation = Activation::parse(*o.activation);
    if (o.out) cfg.out = *o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    if (o.quad_order) cfg.quad_order = *o.quad_order;
    if (o.c_w) cfg.hp.c_w = *o.c_w;
    if (o.c_b) cfg.hp.c_b = *o.c_b;
    if (o.k_min) cfg.k_min = *o.k_min;
    if (o.k_max) cfg.k_max = *o.k_max;
    if (o.k_points) cfg.k_points = *o.k_points;
    if (o.k1) cfg.k1 = *o.k1;
    if (o.dk1) cfg.dk1 = *o.dk1;
    if (o.dk2) cfg.dk2 = *o.dk2;
    if (o.layers) cfg.layers = *o.layers;
    if (o.n_models) cfg.n_models = *o.n_models;
    if (o.width || o.hidden) {
      const int hidden = o.hidden.value_or(static_cast<int>(cfg.hidden_widths.size()));
      const int width = o.width.value_or(cfg.hidden_widths.empty() ? 512 : cfg.hidden_widths.front());
      cfg.hidden_widths.assign(static_cast<std::size_t>(std::max(hidden, 0)), width);
    }
    if (o.epochs) {
      cfg.train.epochs = *o.epochs;
      if (o.config.empty()) {
        cfg.record_epochs.clear();
        for (int q = 0; q <= 4; ++q) cfg.record_epochs.push_back(*o.epochs * q / 4);
      }
    }
    if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
    if (o.train_size) cfg.train.dataset_size = *o.train_size;
    return run(cfg, log);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace rgflow::app
