#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rgflow/activation.hpp"
#include "rgflow/gauss.hpp"

namespace rgflow {

/// Bias variance C_b and rescaled weight variance C_W.
struct InitHyperparams {
  double c_b = 0.0;
  double c_w = 1.0;

  /// Throws ConfigError unless C_W > 0 and C_b >= 0, both finite.
  void validate() const;
};

/// How Gaussian expectations are evaluated.
enum class Route : std::uint8_t {
  /// Closed forms for ReLU/RePU, quadrature otherwise.
  Auto,
  /// Always quadrature.
  Quadrature,
};

struct EvalOptions {
  int quad_order = kDefaultQuadratureOrder;
  Route route = Route::Auto;
};

struct SusceptibilityPoint {
  double k = 0.0;
  double chi_par = 0.0;
  double chi_perp = 0.0;
  double h = 0.0;
  double g = 0.0;
};

// Single-input Gaussian moments of the activation. All require K > 0 and
// throw OverflowError if the expectation is not finite.

/// g(K) = <sigma^2>_K.
double g_of_K(const Activation& a, double k, const EvalOptions& opts = {});
/// <sigma^4>_K, the source term of the single-input vertex recursion.
double sigma4_of_K(const Activation& a, double k, const EvalOptions& opts = {});

/// Parallel susceptibility (C_W / K) <z sigma' sigma>_K.
double chi_par(const Activation& a, const InitHyperparams& hp, double k,
               const EvalOptions& opts = {});
/// Perpendicular susceptibility C_W <sigma'^2>_K.
double chi_perp(const Activation& a, const InitHyperparams& hp, double k,
                const EvalOptions& opts = {});
/// h(K) = C_W / (4K^2) <sigma'^2 (z^2 - K)>_K, which equals d(chi_perp)/dK / 2.
double h_of_K(const Activation& a, const InitHyperparams& hp, double k,
              const EvalOptions& opts = {});

SusceptibilityPoint susceptibility_point(const Activation& a, const InitHyperparams& hp, double k,
                                         const EvalOptions& opts = {});

/// chi_par / chi_perp at C_W = 1. Throws DegenerateError when chi_perp vanishes.
double susceptibility_ratio(const Activation& a, double k, const EvalOptions& opts = {});

/// C_b + C_W g(K).
double kernel_step(const Activation& a, const InitHyperparams& hp, double k,
                   const EvalOptions& opts = {});

enum class FlowStatus : std::uint8_t { Ok, Overflow, Underflow };

std::string_view status_name(FlowStatus status) noexcept;

struct FlowLayer {
  int layer = 0;
  double k00 = 0.0;
  double dk1 = 0.0;
  double dk2 = 0.0;
  double chi_par = 0.0;
  double chi_perp = 0.0;
  double h = 0.0;
  double vertex = 0.0;
  FlowStatus status = FlowStatus::Ok;
};

/// Per-layer record of the infinite-width single-input flow. If the kernel
/// leaves the guard band the last entry carries the Overflow/Underflow status
/// and iteration stops there.
struct KernelFlowTrace {
  std::vector<FlowLayer> layers;

  bool truncated() const noexcept {
    return !layers.empty() && layers.back().status != FlowStatus::Ok;
  }
};

inline constexpr double kFlowFloor = 1e-300;
inline constexpr double kFlowCeiling = 1e300;

/// Iterates K00, delta K[1], delta^2 K[2] and the single-input vertex for
/// `layers` layers starting from layer-1 values. V at layer 1 is zero.
KernelFlowTrace flow(const Activation& a, const InitHyperparams& hp, double k1, double dk1,
                     double dk2, int layers, const EvalOptions& opts = {});

/// V at layers 1..`layers`, dropping the O(1/n) correction. Entries after an
/// over/underflow are omitted.
std::vector<double> vertex_flow(const Activation& a, const InitHyperparams& hp, double k1,
                                int layers, const EvalOptions& opts = {});

/// Coefficients of the two-input kernel in the gamma basis.
struct GammaDecomposition {
  double k0 = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
};

/// Throws DomainError unless [[kpp, kpm], [kpm, kmm]] is positive semidefinite.
GammaDecomposition decompose_two_input_kernel(double kpp, double kmm, double kpm);

struct TwoInputKernel {
  double kpp = 0.0;
  double kmm = 0.0;
  double kpm = 0.0;
};

TwoInputKernel recompose_two_input_kernel(const GammaDecomposition& d);

enum class Susceptibility : std::uint8_t { Parallel, Perpendicular };

/// C_W that sets the chosen susceptibility to one at K*. Throws DegenerateError
/// when the susceptibility vanishes for every C_W.
double solve_critical_cw(const Activation& a, double k_star, Susceptibility which,
                         const EvalOptions& opts = {});

enum class UniversalityClass : std::uint8_t { ScaleInvariant, KStarZero, HalfStable, NoCriticality };

std::string_view class_name(UniversalityClass c) noexcept;

struct EvidencePoint {
  double k = 0.0;
  double chi_par = 0.0;   // at C_W = 1
  double chi_perp = 0.0;  // at C_W = 1
  double ratio = 0.0;
};

struct Classification {
  UniversalityClass universality = UniversalityClass::HalfStable;
  std::vector<EvidencePoint> evidence;
  std::string reason;
};

/// Heuristic universality classification from susceptibilities sampled over
/// K in [1e-6, 1e3]:
///   ScaleInvariant  chi/C_W constant over {1e-3, 1, 1e3} (to 1e-8) and ratio 1;
///   NoCriticality   derivative degenerate, or |ratio - 1| > 1e-3 everywhere;
///   KStarZero       ratio -> 1 (within 1e-3) at K = 1e-6 and sigma(0) = 0;
///   HalfStable      everything else.
Classification classify_universality(const Activation& a, const EvalOptions& opts = {});

/// Log-spaced grid of `points` values from `lo` to `hi` inclusive.
std::vector<double> log_grid(double lo, double hi, int points);

}  // namespace rgflow
