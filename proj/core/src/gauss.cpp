#include "rgflow/gauss.hpp"

#include <Eigen/Eigenvalues>
#include <map>
#include <memory>
#include <mutex>

namespace rgflow {
namespace {

// Orthonormal Hermite recurrence at x; returns (p_n, p_{n-1}).
std::pair<double, double> hermite_pair(int n, double x) {
  double p1 = std::pow(std::numbers::pi, -0.25);
  double p2 = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double p3 = p2;
    p2 = p1;
    p1 = x * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
  }
  return {p1, p2};
}

}  // namespace

QuadratureRule gauss_hermite_rule(int order) {
  if (order < 1) throw DomainError("quadrature order must be >= 1");
  // Golub-Welsch for starting values, then Newton polishing on the recurrence.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(std::max(order - 1, 0));
  for (int i = 1; i < order; ++i) sub[i - 1] = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& roots = solver.eigenvalues();

  QuadratureRule rule;
  rule.order = order;
  // Solve the non-negative half and mirror, which keeps the rule exactly symmetric.
  std::vector<std::pair<double, double>> half;
  for (int i = order / 2; i < order; ++i) {
    double x = (order % 2 == 1 && i == order / 2) ? 0.0 : roots[i];
    double deriv = 0.0;
    for (int it = 0; it < 8; ++it) {
      const auto [pn, pn1] = hermite_pair(order, x);
      deriv = std::sqrt(2.0 * order) * pn1;
      const double step = pn / deriv;
      x -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    const auto [pn, pn1] = hermite_pair(order, x);
    deriv = std::sqrt(2.0 * order) * pn1;
    // Far nodes overflow the recurrence; their weights are below the double range anyway.
    if (!std::isfinite(x) || !std::isfinite(deriv)) continue;
    half.emplace_back(x, 2.0 / (deriv * deriv));
  }
  std::sort(half.begin(), half.end());
  for (auto it = half.rbegin(); it != half.rend(); ++it) {
    if (it->first == 0.0 || it->second == 0.0) continue;
    rule.nodes.push_back(-it->first);
    rule.weights.push_back(it->second);
  }
  for (const auto& [x, w] : half) {
    if (w == 0.0) continue;
    rule.nodes.push_back(x);
    rule.weights.push_back(w);
  }
  return rule;
}

QuadratureRule gauss_legendre_rule(int order) {
  if (order < 1) throw DomainError("quadrature order must be >= 1");
  QuadratureRule rule;
  rule.order = order;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int m = (order + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * x * p2 - (j - 1.0) * p3) / j;
      }
      dp = order * (x * p1 - p2) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) <= 1e-16) break;
    }
    double p1 = 1.0;
    double p2 = 0.0;
    for (int j = 1; j <= order; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = ((2.0 * j - 1.0) * x * p2 - (j - 1.0) * p3) / j;
    }
    dp = order * (x * p1 - p2) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[order - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

double double_factorial(int n) {
  if (n < -1) throw DomainError("double factorial undefined for n < -1");
  double out = 1.0;
  for (int k = n; k > 1; k -= 2) out *= k;
  return out;
}

GaussianIntegrator::GaussianIntegrator(int order)
    : order_(order),
      hermite_(gauss_hermite_rule(order)),
      legendre_(gauss_legendre_rule(kPanelNodes)),
      panel_width_(2.0 * kTailCut * kPanelNodes / std::max(order, kPanelNodes)) {}

const GaussianIntegrator& GaussianIntegrator::shared(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const GaussianIntegrator>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<const GaussianIntegrator>(order);
  return *slot;
}

}  // namespace rgflow
