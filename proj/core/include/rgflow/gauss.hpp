#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "rgflow/activation.hpp"
#include "rgflow/error.hpp"

namespace rgflow {

inline constexpr int kDefaultQuadratureOrder = 400;

/// Mean-zero one-dimensional Gaussian with variance K.
class GaussianMeasure {
 public:
  explicit GaussianMeasure(double variance) : variance_(variance) {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
      throw DomainError("Gaussian variance must be positive and finite");
    }
  }

  double variance() const noexcept { return variance_; }

 private:
  double variance_;
};

/// Nodes and weights of a one-dimensional quadrature rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;
};

/// Gauss-Hermite rule for the raw weight exp(-x^2): weights sum to sqrt(pi).
/// Nodes whose weight underflows to zero are dropped, so `nodes.size()` may be
/// smaller than `order` for very high orders.
QuadratureRule gauss_hermite_rule(int order);

/// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre_rule(int order);

/// n!! with (-1)!! = 0!! = 1, in floating point.
double double_factorial(int n);

/// Evaluates <f(z)>_K for piecewise-smooth observables of polynomial growth.
///
/// Smooth observables go through Gauss-Hermite with `order` nodes. When the
/// hints place a breakpoint inside the effective support, or the observable
/// has structure finer than the Hermite grid can resolve, the standardized
/// line [-kTailCut, kTailCut] is split at the breakpoints and integrated with
/// composite 20-point Gauss-Legendre panels whose count scales with `order`.
class GaussianIntegrator {
 public:
  static constexpr double kTailCut = 16.0;
  static constexpr int kPanelNodes = 20;
  static constexpr int kMaxPanels = 1 << 14;

  explicit GaussianIntegrator(int order = kDefaultQuadratureOrder);

  /// Process-wide cached integrator for `order`. Thread-safe.
  static const GaussianIntegrator& shared(int order = kDefaultQuadratureOrder);

  int order() const noexcept { return order_; }
  const QuadratureRule& hermite() const noexcept { return hermite_; }

  template <class F>
  double expect(const GaussianMeasure& measure, F&& f, const QuadratureHints& hints = {}) const {
    const double scale = std::sqrt(measure.variance());
    std::vector<double> cuts;
    for (double b : hints.breakpoints) {
      const double t = b / scale;
      if (std::abs(t) < kTailCut) cuts.push_back(t);
    }
    const double feature = hints.feature_width / scale;
    double result = 0.0;
    if (cuts.empty() && feature >= 1.0) {
      result = hermite_sum(scale, f);
    } else {
      result = panel_sum(scale, f, cuts, std::min(panel_width_, feature));
    }
    if (!std::isfinite(result)) {
      throw OverflowError("Gaussian expectation is not finite");
    }
    return result;
  }

 private:
  template <class F>
  double hermite_sum(double scale, F& f) const {
    const double stretch = std::numbers::sqrt2 * scale;
    double acc = 0.0;
    for (std::size_t i = 0; i < hermite_.nodes.size(); ++i) {
      acc += hermite_.weights[i] * f(stretch * hermite_.nodes[i]);
    }
    return acc / std::sqrt(std::numbers::pi);
  }

  template <class F>
  double panel_sum(double scale, F& f, std::vector<double>& cuts, double max_width) const {
    std::sort(cuts.begin(), cuts.end());
    cuts.insert(cuts.begin(), -kTailCut);
    cuts.push_back(kTailCut);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double a = cuts[s];
      const double b = cuts[s + 1];
      if (!(b > a)) continue;
      const int panels =
          std::clamp(static_cast<int>(std::ceil((b - a) / max_width)), 1, kMaxPanels);
      const double h = (b - a) / panels;
      for (int k = 0; k < panels; ++k) {
        const double mid = a + (k + 0.5) * h;
        double part = 0.0;
        for (std::size_t i = 0; i < legendre_.nodes.size(); ++i) {
          const double t = mid + 0.5 * h * legendre_.nodes[i];
          part += legendre_.weights[i] * f(scale * t) * std::exp(-0.5 * t * t);
        }
        acc += 0.5 * h * part;
      }
    }
    return acc * inv_sqrt_2pi;
  }

  int order_;
  QuadratureRule hermite_;
  QuadratureRule legendre_;
  double panel_width_;
};

/// Convenience wrapper over the shared integrator.
template <class F>
double expect(const GaussianMeasure& measure, F&& f, const QuadratureHints& hints = {},
              int order = kDefaultQuadratureOrder) {
  return GaussianIntegrator::shared(order).expect(measure, std::forward<F>(f), hints);
}

}  // namespace rgflow
