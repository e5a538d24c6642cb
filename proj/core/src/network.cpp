#include "rgflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "rgflow/error.hpp"
#include "rgflow/random.hpp"

namespace rgflow {

using nlohmann::json;

int Architecture::width(int l) const {
  if (l < 0 || l > depth()) throw DomainError("layer index out of range");
  if (l == 0) return n_in;
  if (l == depth()) return n_out;
  return hidden_widths[static_cast<std::size_t>(l - 1)];
}

void Architecture::validate() const {
  if (n_in < 1 || n_out < 1) throw ConfigError("input and output widths must be >= 1");
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (batch_size < 0) throw ConfigError("batch size must be >= 0 (0 = full batch)");
  if (dataset_size < 1) throw ConfigError("dataset size must be >= 1");
  if (test_size < 0) throw ConfigError("test size must be >= 0");
}

NetworkParams init_params(const Architecture& arch, const InitHyperparams& hp, std::uint64_t seed) {
  arch.validate();
  hp.validate();
  NetworkParams params;
  params.arch = arch;
  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double bias_sd = std::sqrt(hp.c_b);
  for (int l = 1; l <= arch.depth(); ++l) {
    const int rows = arch.width(l);
    const int cols = arch.width(l - 1);
    const double weight_sd = std::sqrt(hp.c_w / cols);
    Eigen::MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = weight_sd * normal(rng);
    }
    Eigen::VectorXd b(rows);
    for (int i = 0; i < rows; ++i) b[i] = hp.c_b > 0.0 ? bias_sd * normal(rng) : 0.0;
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

ForwardTrace forward(const NetworkParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const Architecture& arch = params.arch;
  if (inputs.rows() != arch.n_in) {
    throw DomainError("input dimension " + std::to_string(inputs.rows()) + " does not match n_in " +
                      std::to_string(arch.n_in));
  }
  const Activation& act = arch.activation;
  ForwardTrace trace;
  trace.activations.reserve(static_cast<std::size_t>(arch.depth()));
  trace.preactivations.reserve(static_cast<std::size_t>(arch.depth()));
  trace.activations.emplace_back(inputs);
  for (int l = 1; l <= arch.depth(); ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    Eigen::MatrixXd z = params.weights[idx] * trace.activations.back();
    z.colwise() += params.biases[idx];
    if (trace.finite && !z.allFinite()) trace.finite = false;
    if (l < arch.depth()) {
      trace.activations.push_back(z.unaryExpr([&act](double v) { return act.value(v); }));
    }
    trace.preactivations.push_back(std::move(z));
  }
  return trace;
}

double mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                const Eigen::Ref<const Eigen::MatrixXd>& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw DomainError("output and target shapes differ");
  }
  return (outputs - targets).squaredNorm() / (2.0 * static_cast<double>(outputs.cols()));
}

Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                   const Eigen::Ref<const Eigen::MatrixXd>& targets) {
  const int depth = params.arch.depth();
  if (static_cast<int>(trace.preactivations.size()) != depth) {
    throw DomainError("trace does not match network depth");
  }
  const Activation& act = params.arch.activation;
  Gradients grads;
  grads.weights.resize(static_cast<std::size_t>(depth));
  grads.biases.resize(static_cast<std::size_t>(depth));
  grads.loss = mse_loss(trace.output(), targets);

  const double n = static_cast<double>(targets.cols());
  Eigen::MatrixXd delta = (trace.output() - targets) / n;
  for (int l = depth; l >= 1; --l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    grads.weights[idx] = delta * trace.activations[idx].transpose();
    grads.biases[idx] = delta.rowwise().sum();
    if (l > 1) {
      const Eigen::MatrixXd& z = trace.preactivations[idx - 1];
      delta = (params.weights[idx].transpose() * delta)
                  .cwiseProduct(z.unaryExpr([&act](double v) { return act.derivative(v); }));
    }
  }
  grads.finite = std::isfinite(grads.loss) &&
                 std::all_of(grads.weights.begin(), grads.weights.end(),
                             [](const Eigen::MatrixXd& g) { return g.allFinite(); });
  return grads;
}

Dataset synth_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("dataset size must be >= 1");
  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.inputs.resize(2, n);
  data.targets.resize(1, n);
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double y = normal(rng);
    data.inputs(0, i) = x;
    data.inputs(1, i) = y;
    data.targets(0, i) = x * x + y * y;
  }
  return data;
}

namespace {

void apply_update(NetworkParams& params, const Gradients& grads, double lr) {
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    params.weights[i] -= lr * grads.weights[i];
    params.biases[i] -= lr * grads.biases[i];
  }
}

}  // namespace

TrainResult train(NetworkParams params, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset* test_set, const EpochCallback& on_epoch) {
  cfg.validate();
  const int n = train_set.size();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
  Engine rng = make_engine(cfg.seed, 0x7261696eULL);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
  for (int epoch = 0;; ++epoch) {
    ForwardTrace trace = forward(params, train_set.inputs);
    const double train_loss = mse_loss(trace.output(), train_set.targets);
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    if (test_set != nullptr && test_set->size() > 0) {
      test_loss = mse_loss(forward(params, test_set->inputs).output(), test_set->targets);
    }
    result.losses.push_back({epoch, train_loss, test_loss});
    if (!std::isfinite(train_loss)) {
      result.diverged = true;
      break;
    }
    if (on_epoch && !on_epoch(epoch, params)) {
      result.diverged = true;
      break;
    }
    if (epoch == cfg.epochs) break;

    if (full_batch) {
      apply_update(params, backward(params, trace, train_set.targets), cfg.learning_rate);
      continue;
    }
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(train_set.inputs.rows(), count);
      Eigen::MatrixXd yb(train_set.targets.rows(), count);
      for (int k = 0; k < count; ++k) {
        xb.col(k) = train_set.inputs.col(order[static_cast<std::size_t>(start + k)]);
        yb.col(k) = train_set.targets.col(order[static_cast<std::size_t>(start + k)]);
      }
      apply_update(params, backward(params, forward(params, xb), yb), cfg.learning_rate);
    }
  }
  result.params = std::move(params);
  return result;
}

std::string checkpoint_to_json(const NetworkParams& params) {
  const Architecture& arch = params.arch;
  json doc;
  doc["architecture"] = {{"n_in", arch.n_in},
                         {"n_out", arch.n_out},
                         {"hidden_widths", arch.hidden_widths},
                         {"activation", arch.activation.to_string()}};
  json layers = json::array();
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const Eigen::MatrixXd& w = params.weights[i];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    const Eigen::VectorXd& b = params.biases[i];
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"weights", flat},
                      {"biases", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  doc["layers"] = std::move(layers);
  return doc.dump();
}

NetworkParams checkpoint_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    NetworkParams params;
    const json& a = doc.at("architecture");
    params.arch.n_in = a.at("n_in").get<int>();
    params.arch.n_out = a.at("n_out").get<int>();
    params.arch.hidden_widths = a.at("hidden_widths").get<std::vector<int>>();
    params.arch.activation = Activation::parse(a.at("activation").get<std::string>());
    params.arch.validate();
    const json& layers = doc.at("layers");
    if (static_cast<int>(layers.size()) != params.arch.depth()) {
      throw ConfigError("checkpoint layer count does not match architecture");
    }
    for (int l = 1; l <= params.arch.depth(); ++l) {
      const json& layer = layers.at(static_cast<std::size_t>(l - 1));
      const int rows = layer.at("rows").get<int>();
      const int cols = layer.at("cols").get<int>();
      if (rows != params.arch.width(l) || cols != params.arch.width(l - 1)) {
        throw ConfigError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
      }
      const auto flat = layer.at("weights").get<std::vector<double>>();
      const auto bias = layer.at("biases").get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(rows) * cols ||
          bias.size() != static_cast<std::size_t>(rows)) {
        throw ConfigError("checkpoint layer " + std::to_string(l) + " has the wrong size");
      }
      Eigen::MatrixXd w(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) w(r, c) = flat[static_cast<std::size_t>(r) * cols + c];
      }
      params.weights.push_back(std::move(w));
      params.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), rows));
    }
    return params;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params) << '\n';
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

}  // namespace rgflow
