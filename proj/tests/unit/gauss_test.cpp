#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rgflow/criticality.hpp"
#include "rgflow/gauss.hpp"
#include "rgflow/random.hpp"

using namespace rgflow;

namespace {

const EvalOptions kQuad{kDefaultQuadratureOrder, Route::Quadrature};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Gauss, SecondMoment) {
  EXPECT_NEAR(expect(GaussianMeasure(1.0), [](double z) { return z * z; }), 1.0, 1e-13);
  EXPECT_NEAR(expect(GaussianMeasure(4.0), [](double z) { return z * z; }), 4.0, 4e-13);
}

TEST(Gauss, ReluSquaredHalfGaussian) {
  const Activation relu = Activation::relu();
  const auto f = [&](double z) { return relu(z) * relu(z); };
  EXPECT_NEAR(expect(GaussianMeasure(1.0), f, relu.quadrature_hints()), 0.5, 1e-13);
  EXPECT_NEAR(expect(GaussianMeasure(1.0), f), 0.5, 1e-4);
}

TEST(Gauss, ReluSquaredMonteCarlo) {
  Engine rng = make_engine(12345);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 10'000'000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = normal(rng);
    if (z > 0.0) acc += z * z;
  }
  // sd of relu(z)^2 is sqrt(5/4)
  EXPECT_NEAR(acc / n, 0.5, 5.0 * std::sqrt(1.25 / n));
}

TEST(Gauss, GOfKExamples) {
  for (double k : {0.01, 1.0, 37.0}) {
    EXPECT_NEAR(g_of_K(Activation::relu(), k, kQuad), k / 2.0, 1e-12 * k);
    EXPECT_NEAR(g_of_K(Activation::relu(), k), k / 2.0, 1e-12 * k);
  }
  EXPECT_DOUBLE_EQ(g_of_K(Activation::repu(2), 1.0), 1.5);
  EXPECT_NEAR(g_of_K(Activation::repu(2), 1.0, kQuad), 1.5, 1e-12);
  EXPECT_NEAR(g_of_K(Activation::linear(), 7.0), 7.0, 1e-12);
}

TEST(Gauss, DoubleFactorial) {
  EXPECT_EQ(double_factorial(-1), 1.0);
  EXPECT_EQ(double_factorial(0), 1.0);
  EXPECT_EQ(double_factorial(3), 3.0);
  EXPECT_EQ(double_factorial(5), 15.0);
  EXPECT_EQ(double_factorial(10), 3840.0);
  EXPECT_NEAR(double_factorial(41) / 1.3113070457687988e25, 1.0, 1e-14);
  EXPECT_THROW(double_factorial(-2), DomainError);
}

TEST(Gauss, MeasureDomain) {
  EXPECT_THROW(GaussianMeasure(0.0), DomainError);
  EXPECT_THROW(GaussianMeasure(-1.0), DomainError);
  EXPECT_THROW(GaussianMeasure(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(Gauss, NonFiniteResultIsOverflow) {
  const auto f = [](double z) {
    return std::abs(z) > 3.0 ? std::numeric_limits<double>::infinity() : 1.0;
  };
  EXPECT_THROW(expect(GaussianMeasure(1.0), f), OverflowError);
  EXPECT_THROW(g_of_K(Activation::mrepu(4), 1e120, kQuad), OverflowError);
}

TEST(GaussProperty, HermiteRuleInvariants) {
  for (int order : {1, 2, 3, 7, 20, 64, 200, 400, 800}) {
    const QuadratureRule rule = gauss_hermite_rule(order);
    double sum = 0.0;
    for (double w : rule.weights) {
      EXPECT_GT(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, std::sqrt(std::numbers::pi), 1e-12) << order;
    const std::size_t n = rule.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(rule.nodes[i], -rule.nodes[n - 1 - i]) << order;
      EXPECT_EQ(rule.weights[i], rule.weights[n - 1 - i]) << order;
    }
  }
}

TEST(GaussProperty, PolynomialExactness) {
  // <z^(2m)>_K = (2m-1)!! K^m
  for (int order : {3, 5, 10, 50, 400}) {
    const GaussianIntegrator integ(order);
    for (int d = 0; d <= 2 * order - 1; ++d) {
      if (d > 12) break;
      for (double k : {0.3, 1.0, 5.0}) {
        const double got = integ.expect(GaussianMeasure(k), [d](double z) { return std::pow(z, d); });
        const double want = d % 2 == 1 ? 0.0 : double_factorial(d - 1) * std::pow(k, d / 2);
        const double scale = double_factorial(2 * ((d + 1) / 2) - 1) * std::pow(k, d / 2.0);
        EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, scale)) << order << ' ' << d << ' ' << k;
      }
    }
  }
}

TEST(GaussProperty, Linearity) {
  const Activation t = Activation::tanh();
  const Activation s = Activation::swish();
  const GaussianMeasure m(2.5);
  const auto f = [&](double z) { return t(z) * t(z); };
  const auto g = [&](double z) { return s(z) * z; };
  const double a = 0.7;
  const double b = -3.2;
  const double lhs = expect(m, [&](double z) { return a * f(z) + b * g(z); });
  const double rhs = a * expect(m, f) + b * expect(m, g);
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
}

TEST(GaussProperty, RepuClosedFormMatchesQuadrature) {
  for (int p = 1; p <= 4; ++p) {
    const Activation a = Activation::repu(p);
    for (double k : {0.25, 1.0, 4.0}) {
      EXPECT_LT(rel(g_of_K(a, k, kQuad), g_of_K(a, k)), 1e-8) << p << ' ' << k;
      EXPECT_LT(rel(sigma4_of_K(a, k, kQuad), sigma4_of_K(a, k)), 1e-8) << p << ' ' << k;
    }
  }
}

TEST(GaussProperty, MrepuConvergesUnderOrderDoubling) {
  const InitHyperparams hp{0.0, 1.0};
  for (int p : {2, 3}) {
    const Activation a = Activation::mrepu(p);
    for (double k : {1e-6, 1e-3, 0.1, 1.0, 3.0, 10.0}) {
      const EvalOptions lo{400, Route::Quadrature};
      const EvalOptions hi{800, Route::Quadrature};
      EXPECT_LT(rel(g_of_K(a, k, lo), g_of_K(a, k, hi)), 1e-8) << p << ' ' << k;
      EXPECT_LT(rel(chi_par(a, hp, k, lo), chi_par(a, hp, k, hi)), 1e-8) << p << ' ' << k;
      EXPECT_LT(rel(chi_perp(a, hp, k, lo), chi_perp(a, hp, k, hi)), 1e-8) << p << ' ' << k;
    }
  }
}

TEST(GaussProperty, SmoothActivationsConvergeUnderOrderDoubling) {
  for (const Activation& a : {Activation::tanh(), Activation::sin(), Activation::gelu(),
                              Activation::swish(), Activation::sigmoid(), Activation::softplus()}) {
    for (double k : {1e-4, 1.0, 100.0}) {
      EXPECT_LT(rel(g_of_K(a, k, {200, Route::Quadrature}), g_of_K(a, k, {800, Route::Quadrature})),
                1e-10)
          << a.to_string() << ' ' << k;
    }
  }
}
