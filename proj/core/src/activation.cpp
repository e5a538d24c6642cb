#include "rgflow/activation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

#include "rgflow/error.hpp"

namespace rgflow {
namespace {

double ipow(double x, int n) noexcept {
  double result = 1.0;
  double base = x;
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

double logistic(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

constexpr std::array<std::pair<std::string_view, ActivationKind>, 12> kNames{{
    {"perceptron", ActivationKind::Perceptron},
    {"sigmoid", ActivationKind::Sigmoid},
    {"tanh", ActivationKind::Tanh},
    {"sin", ActivationKind::Sin},
    {"relu", ActivationKind::ReLU},
    {"leaky_relu", ActivationKind::LeakyReLU},
    {"softplus", ActivationKind::Softplus},
    {"swish", ActivationKind::Swish},
    {"gelu", ActivationKind::Gelu},
    {"repu", ActivationKind::RePU},
    {"mrepu", ActivationKind::MRePU},
    {"linear", ActivationKind::Linear},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

double parse_real(const std::string& text, std::string_view what) {
  double out = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end || !std::isfinite(out)) {
    throw ConfigError("activation parameter '" + std::string(what) + "' is not a finite number: '" +
                      text + "'");
  }
  return out;
}

int parse_int(const std::string& text, std::string_view what) {
  int out = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("activation parameter '" + std::string(what) + "' is not an integer: '" +
                      text + "'");
  }
  return out;
}

}  // namespace

std::string_view kind_name(ActivationKind kind) noexcept {
  for (const auto& [name, k] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

Activation Activation::leaky_relu(double alpha) {
  if (!std::isfinite(alpha)) throw ConfigError("leaky_relu requires a finite alpha");
  return Activation(ActivationKind::LeakyReLU, 1, alpha);
}

Activation Activation::repu(int p) {
  if (p < 1) throw ConfigError("repu requires p >= 1, got " + std::to_string(p));
  return Activation(ActivationKind::RePU, p);
}

Activation Activation::mrepu(int p) {
  if (p < 2) throw ConfigError("mrepu requires p >= 2, got " + std::to_string(p));
  return Activation(ActivationKind::MRePU, p);
}

Activation Activation::parse(std::string_view text) {
  const std::string spec = lower(trim(text));
  const auto colon = spec.find(':');
  std::string name = trim(std::string_view(spec).substr(0, colon));
  if (name == "leakyrelu") name = "leaky_relu";

  std::optional<ActivationKind> kind;
  for (const auto& [n, k] : kNames) {
    if (n == name) kind = k;
  }
  if (!kind) throw ConfigError("unknown activation '" + std::string(text) + "'");

  std::optional<int> p;
  std::optional<double> alpha;
  if (colon != std::string::npos) {
    std::stringstream params(spec.substr(colon + 1));
    std::string item;
    while (std::getline(params, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("malformed activation parameter '" + trim(item) + "'");
      }
      const std::string key = trim(std::string_view(item).substr(0, eq));
      const std::string val = trim(std::string_view(item).substr(eq + 1));
      if (key == "p" && (*kind == ActivationKind::RePU || *kind == ActivationKind::MRePU)) {
        p = parse_int(val, key);
      } else if (key == "alpha" && *kind == ActivationKind::LeakyReLU) {
        alpha = parse_real(val, key);
      } else {
        throw ConfigError("activation '" + name + "' does not take parameter '" + key + "'");
      }
    }
  }

  switch (*kind) {
    case ActivationKind::RePU:
    case ActivationKind::MRePU:
      if (!p) throw ConfigError(name + " requires parameter p");
      return *kind == ActivationKind::RePU ? repu(*p) : mrepu(*p);
    case ActivationKind::LeakyReLU:
      if (!alpha) throw ConfigError("leaky_relu requires parameter alpha");
      return leaky_relu(*alpha);
    default:
      return Activation(*kind);
  }
}

std::vector<Activation> Activation::zoo() {
  return {perceptron(), sigmoid(),  tanh(),     sin(),     relu(),     leaky_relu(0.01),
          softplus(),   swish(),    gelu(),     repu(2),   mrepu(2),   linear()};
}

double Activation::value(double z) const noexcept {
  switch (kind_) {
    case ActivationKind::Perceptron:
      return z >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::Sigmoid:
      return logistic(z);
    case ActivationKind::Tanh:
      return std::tanh(z);
    case ActivationKind::Sin:
      return std::sin(z);
    case ActivationKind::ReLU:
      return z >= 0.0 ? z : 0.0;
    case ActivationKind::LeakyReLU:
      return z >= 0.0 ? z : alpha_ * z;
    case ActivationKind::Softplus:
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    case ActivationKind::Swish:
      return z * logistic(z);
    case ActivationKind::Gelu:
      return z * normal_cdf(z);
    case ActivationKind::RePU:
      return z >= 0.0 ? ipow(z, p_) : 0.0;
    case ActivationKind::MRePU:
      return z >= -1.0 ? z * ipow(z + 1.0, p_) : 0.0;
    case ActivationKind::Linear:
      return z;
  }
  return z;
}

double Activation::derivative(double z) const noexcept {
  switch (kind_) {
    case ActivationKind::Perceptron:
      return 0.0;
    case ActivationKind::Sigmoid: {
      const double s = logistic(z);
      return s * (1.0 - s);
    }
    case ActivationKind::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActivationKind::Sin:
      return std::cos(z);
    case ActivationKind::ReLU:
      return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::LeakyReLU:
      return z > 0.0 ? 1.0 : alpha_;
    case ActivationKind::Softplus:
      return logistic(z);
    case ActivationKind::Swish: {
      const double s = logistic(z);
      return s + z * s * (1.0 - s);
    }
    case ActivationKind::Gelu:
      return normal_cdf(z) + z * normal_pdf(z);
    case ActivationKind::RePU:
      return z > 0.0 ? p_ * ipow(z, p_ - 1) : 0.0;
    case ActivationKind::MRePU:
      return z > -1.0 ? ipow(z + 1.0, p_ - 1) * ((p_ + 1) * z + 1.0) : 0.0;
    case ActivationKind::Linear:
      return 1.0;
  }
  return 1.0;
}

QuadratureHints Activation::quadrature_hints() const {
  QuadratureHints hints;
  switch (kind_) {
    case ActivationKind::Perceptron:
    case ActivationKind::ReLU:
    case ActivationKind::LeakyReLU:
    case ActivationKind::RePU:
      hints.breakpoints = {0.0};
      break;
    case ActivationKind::MRePU:
      hints.breakpoints = {-1.0};
      break;
    case ActivationKind::Sin:
      hints.feature_width = 0.5;
      break;
    case ActivationKind::Sigmoid:
    case ActivationKind::Tanh:
    case ActivationKind::Softplus:
    case ActivationKind::Swish:
    case ActivationKind::Gelu:
      hints.feature_width = 1.0;
      break;
    case ActivationKind::Linear:
      break;
  }
  return hints;
}

std::string Activation::to_string() const {
  std::string out(kind_name(kind_));
  if (kind_ == ActivationKind::RePU || kind_ == ActivationKind::MRePU) {
    out += ":p=" + std::to_string(p_);
  } else if (kind_ == ActivationKind::LeakyReLU) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), alpha_);
    out += ":alpha=" + std::string(buf.data(), res.ptr);
  }
  return out;
}

}  // namespace rgflow
