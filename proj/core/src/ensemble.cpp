#include "rgflow/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rgflow/error.hpp"
#include "rgflow/random.hpp"
#include "rgflow/stats.hpp"

namespace rgflow {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void append_layer(ProbeStats& out, const Eigen::Ref<const Eigen::VectorXd>& z, const Activation& act) {
  const auto n = static_cast<double>(z.size());
  double s1 = 0.0;
  double s2 = 0.0;
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double sq = z[i] * z[i];
    const double d = act.derivative(z[i]);
    s1 += sq;
    s2 += sq * sq;
    d2 += d * d;
  }
  out.kernel.push_back(s1 / n);
  out.cross.push_back(z.size() >= 2 ? (s1 * s1 - s2) / (n * (n - 1.0)) : kNaN);
  out.deriv_sq.push_back(d2 / n);
}

bool kernel_excluded(double k) { return !std::isfinite(k) || k > kExclusionThreshold; }

void pad_nan(ProbeStats& out, int depth) {
  const auto d = static_cast<std::size_t>(depth);
  out.kernel.resize(d, kNaN);
  out.cross.resize(d, kNaN);
  out.deriv_sq.resize(d, kNaN);
}

}  // namespace

void EnsembleSpec::validate() const {
  if (n_models < 1) throw ConfigError("ensemble needs at least one model");
  arch.validate();
  hp.validate();
  if (static_cast<int>(probe_input.size()) != arch.n_in) {
    throw ConfigError("probe input dimension does not match n_in");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (train) train->validate();
}

ProbeStats probe_statistics(const NetworkParams& params, std::span<const double> input) {
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
  const ForwardTrace trace = forward(params, x);
  ProbeStats out;
  for (const Eigen::MatrixXd& z : trace.preactivations) {
    append_layer(out, z.col(0), params.arch.activation);
  }
  return out;
}

ProbeStats sample_probe_statistics(const Architecture& arch, const InitHyperparams& hp,
                                   std::uint64_t seed, std::span<const double> input) {
  arch.validate();
  hp.validate();
  if (static_cast<int>(input.size()) != arch.n_in) {
    throw DomainError("probe input dimension does not match n_in");
  }
  const Activation& act = arch.activation;
  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double bias_sd = std::sqrt(hp.c_b);

  ProbeStats out;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), arch.n_in);
  for (int l = 1; l <= arch.depth(); ++l) {
    const int rows = arch.width(l);
    const int cols = arch.width(l - 1);
    const double weight_sd = std::sqrt(hp.c_w / cols);
    Eigen::VectorXd z(rows);
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += (weight_sd * normal(rng)) * a[j];
      z[i] = acc;
    }
    for (int i = 0; i < rows; ++i) z[i] += hp.c_b > 0.0 ? bias_sd * normal(rng) : 0.0;
    append_layer(out, z, act);
    if (kernel_excluded(out.kernel.back())) break;
    a = z.unaryExpr([&act](double v) { return act.value(v); });
  }
  pad_nan(out, arch.depth());
  return out;
}

int exclusion_layer(const ProbeStats& stats) {
  for (std::size_t l = 0; l < stats.kernel.size(); ++l) {
    if (kernel_excluded(stats.kernel[l])) return static_cast<int>(l) + 1;
  }
  return static_cast<int>(stats.kernel.size()) + 1;
}

std::vector<EnsembleLayerStats> aggregate_layers(std::span<const std::optional<ProbeStats>> models,
                                                 const Architecture& arch, double c_w) {
  std::vector<int> cut(models.size(), 0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    cut[m] = models[m] ? exclusion_layer(*models[m]) : 0;
  }
  std::vector<EnsembleLayerStats> out;
  for (int l = 1; l <= arch.depth(); ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    std::vector<double> k, k_sq, cross, deriv;
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (cut[m] <= l) continue;
      const ProbeStats& s = *models[m];
      k.push_back(s.kernel[idx]);
      k_sq.push_back(s.kernel[idx] * s.kernel[idx]);
      cross.push_back(s.cross[idx]);
      deriv.push_back(s.deriv_sq[idx]);
    }
    EnsembleLayerStats row;
    row.layer = l;
    row.width = arch.width(l);
    row.excluded = static_cast<int>(models.size() - k.size());
    row.reliable = 2 * row.excluded <= static_cast<int>(models.size());
    row.mean_k = mean(k);
    row.var_k = sample_variance(k);
    row.chi_perp = c_w * mean(deriv);
    const auto n = static_cast<double>(k.size());
    if (k.size() >= 2 && row.width >= 2) {
      const double total = pairwise_sum(k);
      // Unbiased estimate of E[K]^2 from distinct pairs of models.
      const double sq_mean = (total * total - pairwise_sum(k_sq)) / (n * (n - 1.0));
      row.vertex = arch.width(l - 1) * (mean(cross) - sq_mean);
    } else {
      row.vertex = kNaN;
    }
    out.push_back(row);
  }
  return out;
}

InitEnsembleResult run_init_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  InitEnsembleResult result;
  result.models.resize(static_cast<std::size_t>(spec.n_models));
  parallel_for(result.models.size(), spec.threads, [&](std::size_t i) {
    result.models[i] =
        sample_probe_statistics(spec.arch, spec.hp, spec.master_seed + i, spec.probe_input);
  });
  std::vector<std::optional<ProbeStats>> present(result.models.begin(), result.models.end());
  result.layers = aggregate_layers(present, spec.arch, spec.hp.c_w);
  return result;
}

std::vector<double> empirical_kernel_param_random(const EnsembleSpec& spec, int layer) {
  if (layer < 1 || layer > spec.arch.depth()) throw DomainError("layer out of range");
  const InitEnsembleResult result = run_init_ensemble(spec);
  std::vector<double> out;
  out.reserve(result.models.size());
  for (const ProbeStats& s : result.models) out.push_back(s.kernel[static_cast<std::size_t>(layer - 1)]);
  return out;
}

Eigen::MatrixXd empirical_kernel_data_random(const NetworkParams& params,
                                             const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const ForwardTrace trace = forward(params, inputs);
  Eigen::MatrixXd out(inputs.cols(), params.arch.depth());
  for (int l = 0; l < params.arch.depth(); ++l) {
    const Eigen::MatrixXd& z = trace.preactivations[static_cast<std::size_t>(l)];
    out.col(l) = z.colwise().squaredNorm().transpose() / static_cast<double>(z.rows());
  }
  return out;
}

std::vector<double> empirical_kernel_data_random(const NetworkParams& params, int layer,
                                                 int n_samples, std::uint64_t seed) {
  if (layer < 1 || layer > params.arch.depth()) throw DomainError("layer out of range");
  if (n_samples < 1) throw DomainError("need at least one input sample");
  Engine rng = make_engine(seed, 0x64617461ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd inputs(params.arch.n_in, n_samples);
  for (int c = 0; c < n_samples; ++c) {
    for (int r = 0; r < params.arch.n_in; ++r) inputs(r, c) = normal(rng);
  }
  const Eigen::VectorXd col = empirical_kernel_data_random(params, inputs).col(layer - 1);
  return {col.data(), col.data() + col.size()};
}

VertexEstimate empirical_four_point_vertex(const EnsembleSpec& spec, int layer) {
  if (layer < 1 || layer > spec.arch.depth()) throw DomainError("layer out of range");
  const auto& row = run_init_ensemble(spec).layers[static_cast<std::size_t>(layer - 1)];
  return {row.vertex, row.reliable};
}

double empirical_chi_perp(const EnsembleSpec& spec, int layer) {
  if (layer < 1 || layer > spec.arch.depth()) throw DomainError("layer out of range");
  return run_init_ensemble(spec).layers[static_cast<std::size_t>(layer - 1)].chi_perp;
}

double empirical_chi_perp(std::span<const NetworkParams> networks, std::span<const double> input,
                          double c_w, int layer) {
  std::vector<double> values;
  for (const NetworkParams& p : networks) {
    if (layer < 1 || layer > p.arch.depth()) throw DomainError("layer out of range");
    const ProbeStats s = probe_statistics(p, input);
    if (exclusion_layer(s) <= layer) continue;
    values.push_back(s.deriv_sq[static_cast<std::size_t>(layer - 1)]);
  }
  return c_w * mean(values);
}

std::pair<Dataset, Dataset> make_datasets(const TrainConfig& cfg) {
  Dataset train_set = synth_dataset(cfg.dataset_size, mix_seed(cfg.seed) ^ 0x1ULL);
  Dataset test_set;
  if (cfg.test_size > 0) test_set = synth_dataset(cfg.test_size, mix_seed(cfg.seed) ^ 0x2ULL);
  return {std::move(train_set), std::move(test_set)};
}

TrainingExperimentResult run_training_experiment(const EnsembleSpec& spec,
                                                 std::span<const int> record_epochs) {
  spec.validate();
  if (!spec.train) throw ConfigError("training experiment needs a train configuration");
  if (spec.arch.n_out != 1 || spec.arch.n_in != 2) {
    throw ConfigError("the regression task maps two inputs to one output");
  }
  const TrainConfig& cfg = *spec.train;
  std::vector<int> records(record_epochs.begin(), record_epochs.end());
  std::sort(records.begin(), records.end());
  records.erase(std::unique(records.begin(), records.end()), records.end());
  for (int e : records) {
    if (e < 0 || e > cfg.epochs) {
      throw ConfigError("record epoch " + std::to_string(e) + " outside [0, epochs]");
    }
  }
  const auto [train_set, test_set] = make_datasets(cfg);
  const int depth = spec.arch.depth();

  struct Member {
    std::vector<ProbeStats> snapshots;
    std::vector<LossPoint> losses;
    Eigen::VectorXd test_output;
    double test_mse = kNaN;
    bool excluded = false;
  };
  std::vector<Member> members(static_cast<std::size_t>(spec.n_models));

  parallel_for(members.size(), spec.threads, [&](std::size_t i) {
    Member& m = members[i];
    NetworkParams params = init_params(spec.arch, spec.hp, spec.master_seed + i);
    std::size_t next_record = 0;
    auto on_epoch = [&](int epoch, const NetworkParams& p) {
      if (next_record < records.size() && records[next_record] == epoch) {
        ++next_record;
        m.snapshots.push_back(probe_statistics(p, spec.probe_input));
        if (exclusion_layer(m.snapshots.back()) <= depth) return false;
      }
      return true;
    };
    TrainResult result = train(std::move(params), cfg, train_set, &test_set, on_epoch);
    m.losses = std::move(result.losses);
    m.excluded = result.diverged;
    if (!m.excluded && test_set.size() > 0) {
      m.test_output = forward(result.params, test_set.inputs).output().row(0).transpose();
      m.test_mse = mse_loss(m.test_output.transpose(), test_set.targets);
      if (!std::isfinite(m.test_mse)) m.excluded = true;
    }
  });

  TrainingExperimentResult out;
  out.n_models = spec.n_models;
  for (const Member& m : members) {
    out.excluded += m.excluded ? 1 : 0;
    out.member_test_mse.push_back(m.excluded ? kNaN : m.test_mse);
  }

  for (std::size_t r = 0; r < records.size(); ++r) {
    std::vector<std::optional<ProbeStats>> snaps;
    for (const Member& m : members) {
      if (m.excluded) {
        snaps.emplace_back(std::nullopt);
      } else {
        snaps.emplace_back(m.snapshots[r]);
      }
    }
    out.snapshots.push_back({records[r], aggregate_layers(snaps, spec.arch, spec.hp.c_w)});
  }

  for (int e = 0; e <= cfg.epochs; ++e) {
    std::vector<double> tr, te;
    for (const Member& m : members) {
      if (m.excluded) continue;
      tr.push_back(m.losses[static_cast<std::size_t>(e)].train_loss);
      te.push_back(m.losses[static_cast<std::size_t>(e)].test_loss);
    }
    out.mean_losses.push_back({e, mean(tr), mean(te)});
  }

  std::vector<double> mse;
  for (double v : out.member_test_mse) {
    if (std::isfinite(v)) mse.push_back(v);
  }
  out.mean_test_mse = mean(mse);

  std::vector<double> means, targets;
  for (int t = 0; t < test_set.size(); ++t) {
    std::vector<double> outputs;
    for (const Member& m : members) {
      if (!m.excluded) outputs.push_back(m.test_output[t]);
    }
    TestPoint point;
    point.target = test_set.targets(0, t);
    point.mean_output = mean(outputs);
    point.std_output = std::sqrt(sample_variance(outputs));
    out.test_report.push_back(point);
    means.push_back(point.mean_output);
    targets.push_back(point.target);
  }
  out.output_target_correlation =
      out.excluded < spec.n_models && !means.empty() ? correlation(means, targets) : kNaN;
  return out;
}

}  // namespace rgflow
