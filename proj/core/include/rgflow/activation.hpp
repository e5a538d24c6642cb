#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace rgflow {

enum class ActivationKind : std::uint8_t {
  Perceptron,
  Sigmoid,
  Tanh,
  Sin,
  ReLU,
  LeakyReLU,
  Softplus,
  Swish,
  Gelu,
  RePU,
  MRePU,
  Linear,
};

/// Hints for integrating observables built from an activation against a Gaussian.
struct QuadratureHints {
  /// Points where the activation or its derivative is not smooth.
  std::vector<double> breakpoints;
  /// Width (in preactivation units) of the activation's intrinsic structure;
  /// infinity for piecewise-polynomial kinds.
  double feature_width = std::numeric_limits<double>::infinity();
};

/// Immutable activation descriptor: kind plus the parameters that kind needs.
///
/// Construction validates parameters; `value` and `derivative` never throw.
/// Kink conventions: ReLU/RePU/LeakyReLU use the derivative for z > 0 on the
/// positive side (so sigma'(0) is 0 for ReLU/RePU and alpha for LeakyReLU);
/// MRePU returns 0 at z = -1; Perceptron has zero derivative everywhere.
class Activation {
 public:
  /// Linear identity activation.
  Activation() = default;

  static Activation perceptron() { return Activation(ActivationKind::Perceptron); }
  static Activation sigmoid() { return Activation(ActivationKind::Sigmoid); }
  static Activation tanh() { return Activation(ActivationKind::Tanh); }
  static Activation sin() { return Activation(ActivationKind::Sin); }
  static Activation relu() { return Activation(ActivationKind::ReLU); }
  static Activation leaky_relu(double alpha);
  static Activation softplus() { return Activation(ActivationKind::Softplus); }
  static Activation swish() { return Activation(ActivationKind::Swish); }
  static Activation gelu() { return Activation(ActivationKind::Gelu); }
  static Activation repu(int p);
  static Activation mrepu(int p);
  static Activation linear() { return Activation(ActivationKind::Linear); }

  /// Parses strings such as "repu:p=2", "leaky_relu:alpha=0.01" or "TANH".
  /// Throws ConfigError on unknown names, unknown or missing parameters.
  static Activation parse(std::string_view text);

  /// All kinds, with representative parameters, in declaration order.
  static std::vector<Activation> zoo();

  ActivationKind kind() const noexcept { return kind_; }
  int power() const noexcept { return p_; }
  double alpha() const noexcept { return alpha_; }

  double value(double z) const noexcept;
  double derivative(double z) const noexcept;

  double operator()(double z) const noexcept { return value(z); }

  QuadratureHints quadrature_hints() const;

  /// Canonical string accepted by `parse`.
  std::string to_string() const;

  friend bool operator==(const Activation&, const Activation&) = default;

 private:
  explicit Activation(ActivationKind kind, int p = 1, double alpha = 0.0)
      : kind_(kind), p_(p), alpha_(alpha) {}

  ActivationKind kind_ = ActivationKind::Linear;
  int p_ = 1;
  double alpha_ = 0.0;
};

std::string_view kind_name(ActivationKind kind) noexcept;

}  // namespace rgflow
