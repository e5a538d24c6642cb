#include "rgflow/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "rgflow/error.hpp"

namespace rgflow {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool has_closed_form(const Activation& a, const EvalOptions& opts) {
  if (opts.route != Route::Auto) return false;
  return a.kind() == ActivationKind::RePU || a.kind() == ActivationKind::ReLU;
}

bool is_linear(const Activation& a, const EvalOptions& opts) {
  return opts.route == Route::Auto && a.kind() == ActivationKind::Linear;
}

int closed_form_power(const Activation& a) {
  return a.kind() == ActivationKind::RePU ? a.power() : 1;
}

double checked(double value, const char* what) {
  if (!std::isfinite(value)) throw OverflowError(std::string(what) + " is not finite");
  return value;
}

template <class F>
double moment(const Activation& a, double k, const EvalOptions& opts, F&& f) {
  return GaussianIntegrator::shared(opts.quad_order)
      .expect(GaussianMeasure(k), std::forward<F>(f), a.quadrature_hints());
}

}  // namespace

void InitHyperparams::validate() const {
  if (!(c_w > 0.0) || !std::isfinite(c_w)) throw ConfigError("C_W must be positive and finite");
  if (!(c_b >= 0.0) || !std::isfinite(c_b)) {
    throw ConfigError("C_b must be non-negative and finite");
  }
}

double g_of_K(const Activation& a, double k, const EvalOptions& opts) {
  const GaussianMeasure measure(k);
  if (is_linear(a, opts)) return k;
  if (has_closed_form(a, opts)) {
    const int p = closed_form_power(a);
    return checked(double_factorial(2 * p - 1) * std::pow(k, p) / 2.0, "g(K)");
  }
  return moment(a, measure.variance(), opts, [&a](double z) {
    const double s = a.value(z);
    return s * s;
  });
}

double sigma4_of_K(const Activation& a, double k, const EvalOptions& opts) {
  const GaussianMeasure measure(k);
  if (is_linear(a, opts)) return checked(3.0 * k * k, "<sigma^4>");
  if (has_closed_form(a, opts)) {
    const int p = closed_form_power(a);
    return checked(double_factorial(4 * p - 1) * std::pow(k, 2 * p) / 2.0, "<sigma^4>");
  }
  return moment(a, measure.variance(), opts, [&a](double z) {
    const double s = a.value(z);
    return (s * s) * (s * s);
  });
}

double chi_par(const Activation& a, const InitHyperparams& hp, double k, const EvalOptions& opts) {
  hp.validate();
  const GaussianMeasure measure(k);
  if (is_linear(a, opts)) return hp.c_w;
  if (has_closed_form(a, opts)) {
    const int p = closed_form_power(a);
    return checked(hp.c_w * p * double_factorial(2 * p - 1) * std::pow(k, p - 1) / 2.0,
                   "chi_par");
  }
  const double m = moment(a, measure.variance(), opts,
                          [&a](double z) { return z * a.derivative(z) * a.value(z); });
  return checked(hp.c_w * m / k, "chi_par");
}

double chi_perp(const Activation& a, const InitHyperparams& hp, double k, const EvalOptions& opts) {
  hp.validate();
  const GaussianMeasure measure(k);
  if (is_linear(a, opts)) return hp.c_w;
  if (has_closed_form(a, opts)) {
    const int p = closed_form_power(a);
    return checked(hp.c_w * p * p * double_factorial(2 * p - 3) * std::pow(k, p - 1) / 2.0,
                   "chi_perp");
  }
  const double m = moment(a, measure.variance(), opts, [&a](double z) {
    const double d = a.derivative(z);
    return d * d;
  });
  return checked(hp.c_w * m, "chi_perp");
}

double h_of_K(const Activation& a, const InitHyperparams& hp, double k, const EvalOptions& opts) {
  hp.validate();
  const GaussianMeasure measure(k);
  if (is_linear(a, opts)) return 0.0;
  if (has_closed_form(a, opts)) {
    const int p = closed_form_power(a);
    if (p == 1) return 0.0;
    return checked(hp.c_w * p * p * double_factorial(2 * p - 3) * (p - 1) * std::pow(k, p - 2) /
                       4.0,
                   "h(K)");
  }
  const double m = moment(a, measure.variance(), opts, [&a, k](double z) {
    const double d = a.derivative(z);
    return d * d * (z * z - k);
  });
  return checked(hp.c_w * m / (4.0 * k * k), "h(K)");
}

SusceptibilityPoint susceptibility_point(const Activation& a, const InitHyperparams& hp, double k,
                                         const EvalOptions& opts) {
  SusceptibilityPoint out;
  out.k = k;
  out.g = g_of_K(a, k, opts);
  out.chi_par = chi_par(a, hp, k, opts);
  out.chi_perp = chi_perp(a, hp, k, opts);
  out.h = h_of_K(a, hp, k, opts);
  return out;
}

double susceptibility_ratio(const Activation& a, double k, const EvalOptions& opts) {
  const InitHyperparams unit{0.0, 1.0};
  const double perp = chi_perp(a, unit, k, opts);
  if (perp == 0.0) {
    throw DegenerateError("perpendicular susceptibility vanishes for " + a.to_string());
  }
  return chi_par(a, unit, k, opts) / perp;
}

double kernel_step(const Activation& a, const InitHyperparams& hp, double k,
                   const EvalOptions& opts) {
  hp.validate();
  return checked(hp.c_b + hp.c_w * g_of_K(a, k, opts), "kernel");
}

std::string_view status_name(FlowStatus status) noexcept {
  switch (status) {
    case FlowStatus::Ok:
      return "ok";
    case FlowStatus::Overflow:
      return "overflow";
    case FlowStatus::Underflow:
      return "underflow";
  }
  return "ok";
}

KernelFlowTrace flow(const Activation& a, const InitHyperparams& hp, double k1, double dk1,
                     double dk2, int layers, const EvalOptions& opts) {
  hp.validate();
  if (!(k1 > 0.0)) throw DomainError("flow requires K1 > 0");
  if (layers < 1) throw DomainError("flow requires at least one layer");

  KernelFlowTrace trace;
  trace.layers.reserve(static_cast<std::size_t>(layers));
  double k = k1;
  double d1 = dk1;
  double d2 = dk2;
  double v = 0.0;
  for (int l = 1; l <= layers; ++l) {
    FlowLayer row{l, k, d1, d2, kNaN, kNaN, kNaN, v, FlowStatus::Ok};
    if (!std::isfinite(k) || k > kFlowCeiling) {
      row.status = FlowStatus::Overflow;
    } else if (k < kFlowFloor) {
      row.status = FlowStatus::Underflow;
    }
    if (row.status != FlowStatus::Ok) {
      trace.layers.push_back(row);
      break;
    }

    SusceptibilityPoint sp;
    try {
      sp = susceptibility_point(a, hp, k, opts);
    } catch (const OverflowError&) {
      row.status = FlowStatus::Overflow;
      trace.layers.push_back(row);
      break;
    }
    row.chi_par = sp.chi_par;
    row.chi_perp = sp.chi_perp;
    row.h = sp.h;
    trace.layers.push_back(row);
    if (l == layers) break;

    double source = std::numeric_limits<double>::infinity();
    try {
      source = hp.c_w * hp.c_w * (sigma4_of_K(a, k, opts) - sp.g * sp.g);
    } catch (const OverflowError&) {
    }
    const double next_k = hp.c_b + hp.c_w * sp.g;
    d2 = sp.chi_perp * d2 + sp.h * d1 * d1;
    d1 = sp.chi_par * d1;
    v = sp.chi_par * sp.chi_par * v + source;
    k = next_k;
  }
  return trace;
}

std::vector<double> vertex_flow(const Activation& a, const InitHyperparams& hp, double k1,
                                int layers, const EvalOptions& opts) {
  const KernelFlowTrace trace = flow(a, hp, k1, 0.0, 0.0, layers, opts);
  std::vector<double> out;
  for (const FlowLayer& row : trace.layers) {
    if (row.status != FlowStatus::Ok) break;
    out.push_back(row.vertex);
  }
  return out;
}

GammaDecomposition decompose_two_input_kernel(double kpp, double kmm, double kpm) {
  const double tol = 1e-12 * std::max(1.0, std::abs(kpp * kmm));
  if (!std::isfinite(kpp) || !std::isfinite(kmm) || !std::isfinite(kpm) || kpp < 0.0 ||
      kmm < 0.0 || kpp * kmm - kpm * kpm < -tol) {
    throw DomainError("two-input kernel is not positive semidefinite");
  }
  return {(kpp + kmm + 2.0 * kpm) / 4.0, (kpp - kmm) / 2.0, (kpp + kmm - 2.0 * kpm) / 4.0};
}

TwoInputKernel recompose_two_input_kernel(const GammaDecomposition& d) {
  return {d.k0 + d.k1 + d.k2, d.k0 - d.k1 + d.k2, d.k0 - d.k2};
}

double solve_critical_cw(const Activation& a, double k_star, Susceptibility which,
                         const EvalOptions& opts) {
  const InitHyperparams unit{0.0, 1.0};
  const double chi = which == Susceptibility::Parallel ? chi_par(a, unit, k_star, opts)
                                                       : chi_perp(a, unit, k_star, opts);
  if (chi == 0.0) {
    throw DegenerateError("no C_W sets the susceptibility of " + a.to_string() + " to one");
  }
  return 1.0 / chi;
}

std::string_view class_name(UniversalityClass c) noexcept {
  switch (c) {
    case UniversalityClass::ScaleInvariant:
      return "scale_invariant";
    case UniversalityClass::KStarZero:
      return "k_star_zero";
    case UniversalityClass::HalfStable:
      return "half_stable";
    case UniversalityClass::NoCriticality:
      return "no_criticality";
  }
  return "half_stable";
}

std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw DomainError("invalid log grid");
  std::vector<double> out(static_cast<std::size_t>(points));
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < points; ++i) out[i] = std::pow(10.0, a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

Classification classify_universality(const Activation& a, const EvalOptions& opts) {
  constexpr double kRatioTol = 1e-3;
  constexpr double kInvarianceTol = 1e-8;
  const InitHyperparams unit{0.0, 1.0};

  Classification out;
  // Half-decade grid over [1e-6, 1e3]; contains the scale-invariance probes 1e-3, 1, 1e3.
  for (double k : log_grid(1e-6, 1e3, 19)) {
    try {
      EvidencePoint e;
      e.k = k;
      e.chi_par = chi_par(a, unit, k, opts);
      e.chi_perp = chi_perp(a, unit, k, opts);
      e.ratio = e.chi_perp != 0.0 ? e.chi_par / e.chi_perp : kNaN;
      out.evidence.push_back(e);
    } catch (const OverflowError&) {
    }
  }
  if (out.evidence.empty()) {
    out.universality = UniversalityClass::NoCriticality;
    out.reason = "susceptibilities not evaluable on the probe grid";
    return out;
  }
  if (std::all_of(out.evidence.begin(), out.evidence.end(),
                  [](const EvidencePoint& e) { return e.chi_perp == 0.0; })) {
    out.universality = UniversalityClass::NoCriticality;
    out.reason = "derivative is degenerate (chi_perp = 0)";
    return out;
  }

  auto at = [&out](double k) -> std::optional<EvidencePoint> {
    for (const auto& e : out.evidence) {
      if (std::abs(std::log10(e.k / k)) < 1e-9) return e;
    }
    return std::nullopt;
  };

  bool invariant = true;
  std::optional<EvidencePoint> ref;
  for (double k : {1e-3, 1.0, 1e3}) {
    const auto e = at(k);
    if (!e) {
      invariant = false;
      break;
    }
    if (!ref) ref = e;
    const auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(y), 1e-300); };
    if (rel(e->chi_par, ref->chi_par) > kInvarianceTol ||
        rel(e->chi_perp, ref->chi_perp) > kInvarianceTol ||
        !(std::abs(e->ratio - 1.0) <= kInvarianceTol)) {
      invariant = false;
    }
  }
  if (invariant) {
    out.universality = UniversalityClass::ScaleInvariant;
    out.reason = "susceptibilities independent of K with ratio 1";
    return out;
  }

  if (std::all_of(out.evidence.begin(), out.evidence.end(), [](const EvidencePoint& e) {
        return !std::isfinite(e.ratio) || std::abs(e.ratio - 1.0) > kRatioTol;
      })) {
    out.universality = UniversalityClass::NoCriticality;
    out.reason = "ratio chi_par/chi_perp bounded away from 1 on the whole grid";
    return out;
  }

  const auto smallest = at(1e-6);
  if (smallest && std::abs(smallest->ratio - 1.0) <= kRatioTol && a.value(0.0) == 0.0) {
    out.universality = UniversalityClass::KStarZero;
    out.reason = "ratio tends to 1 as K -> 0 and sigma(0) = 0";
    return out;
  }
  out.universality = UniversalityClass::HalfStable;
  out.reason = "ratio crosses 1 away from K = 0";
  return out;
}

}  // namespace rgflow
