// SPDX-License-Identifier: Apache-2.0

#include "fmlab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fmlab/errors.hpp"

namespace fmlab {

namespace {

void require_params(const std::string& id, const std::vector<double>& params, std::size_t n) {
  if (params.size() != n) {
    throw DomainError("coefficient '" + id + "' expects " + std::to_string(n) + " parameter(s)");
  }
}

CoefficientFn constant_fn(double c) {
  return {[c](double) { return c; }, [](double) { return 0.0; }};
}

CoefficientFn sqrt_bridge(double r, double delta) {
  return {[r, delta](double t) { return 2.0 * r * std::sqrt((delta + t) * (1.0 + delta - t)); },
          [r, delta](double t) {
            return r * (1.0 - 2.0 * t) / std::sqrt((delta + t) * (1.0 + delta - t));
          }};
}

}  // namespace

CoefficientFn named_coefficient(const std::string& id, const std::vector<double>& params) {
  if (id == "zero") return constant_fn(0.0);
  if (id == "one") return constant_fn(1.0);
  if (id == "constant") {
    require_params(id, params, 1);
    return constant_fn(params[0]);
  }
  if (id == "linear") {
    require_params(id, params, 2);
    const double a = params[0], b = params[1];
    return {[a, b](double t) { return a + (b - a) * t; }, [a, b](double) { return b - a; }};
  }
  if (id == "geometric") {
    require_params(id, params, 2);
    const double a = params[0], b = params[1];
    if (a <= 0.0 || b <= 0.0) throw DomainError("geometric coefficient needs positive endpoints");
    const double rate = std::log(b / a);
    return {[a, rate](double t) { return a * std::exp(rate * t); },
            [a, rate](double t) { return a * rate * std::exp(rate * t); }};
  }
  if (id == "sqrt_bridge") {
    require_params(id, params, 2);
    return sqrt_bridge(params[0], params[1]);
  }
  if (id == "sin_bump") {
    require_params(id, params, 2);
    const double lo = params[0], hi = params[1];
    return {[lo, hi](double t) { return lo + (hi - lo) * std::sin(std::numbers::pi * t); },
            [lo, hi](double t) {
              return (hi - lo) * std::numbers::pi * std::cos(std::numbers::pi * t);
            }};
  }
  if (id == "cos_quarter") {
    require_params(id, params, 2);
    const double scale = params[0], rate = params[1];
    return {[scale, rate](double t) { return scale * std::cos(rate * t); },
            [scale, rate](double t) { return -scale * rate * std::sin(rate * t); }};
  }
  if (id == "sin_quarter") {
    require_params(id, params, 2);
    const double scale = params[0], rate = params[1];
    return {[scale, rate](double t) { return scale * std::sin(rate * t); },
            [scale, rate](double t) { return scale * rate * std::cos(rate * t); }};
  }
  throw DomainError("unknown coefficient function '" + id + "'");
}

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::GenericConcave: return "generic_concave";
    case ScheduleKind::VP: return "vp";
    case ScheduleKind::VE: return "ve";
    case ScheduleKind::Custom: return "custom";
  }
  return "unknown";
}

Schedule::Schedule(ScheduleKind kind, std::string label, CoefficientFn a, CoefficientFn b,
                   CoefficientFn g, double radius, double delta)
    : kind_(kind),
      label_(std::move(label)),
      alpha_(std::move(a)),
      beta_(std::move(b)),
      gamma_(std::move(g)),
      radius_(radius),
      delta_(delta) {}

Schedule Schedule::generic_concave(double radius, double delta) {
  if (radius <= 0.0 || delta <= 0.0) {
    throw DomainError("generic_concave schedule needs R > 0 and delta > 0");
  }
  return Schedule(ScheduleKind::GenericConcave, "generic_concave",
                  named_coefficient("linear", {1.0, 0.0}), named_coefficient("linear", {0.0, 1.0}),
                  sqrt_bridge(radius, delta), radius, delta);
}

Schedule Schedule::vp(double radius, double delta) {
  if (radius <= 0.0 || delta <= 0.0 || delta >= std::numbers::pi / 2) {
    throw DomainError("vp schedule needs R > 0 and 0 < delta < pi/2");
  }
  const double rate = std::numbers::pi / 2 - delta;
  return Schedule(ScheduleKind::VP, "vp", constant_fn(0.0),
                  named_coefficient("sin_quarter", {1.0, rate}),
                  named_coefficient("cos_quarter", {radius, rate}), radius, delta);
}

Schedule Schedule::ve(double gamma0, double gamma1) {
  if (!(gamma0 > gamma1 && gamma1 > 0.0)) {
    throw DomainError("ve schedule needs gamma0 > gamma1 > 0");
  }
  return Schedule(ScheduleKind::VE, "ve", constant_fn(0.0), constant_fn(1.0),
                  named_coefficient("geometric", {gamma0, gamma1}), 0.0, 0.0);
}

Schedule Schedule::custom(CoefficientFn alpha, CoefficientFn beta, CoefficientFn gamma,
                          std::string label) {
  return Schedule(ScheduleKind::Custom, std::move(label), std::move(alpha), std::move(beta),
                  std::move(gamma), 0.0, 0.0);
}

Coefficients Schedule::eval(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("schedule evaluated outside [0, 1]: t=" + std::to_string(t));
  }
  return {alpha_.value(t),      beta_.value(t),      gamma_.value(t),
          alpha_.derivative(t), beta_.derivative(t), gamma_.derivative(t)};
}

bool Schedule::alpha_vanishes() const {
  if (kind_ == ScheduleKind::VP || kind_ == ScheduleKind::VE) return true;
  for (int k = 0; k <= 1000; ++k) {
    const double t = k / 1000.0;
    if (alpha_.value(t) != 0.0 || alpha_.derivative(t) != 0.0) return false;
  }
  return true;
}

namespace {

template <class Cmp>
double gamma_extreme(const Schedule& s, Cmp better) {
  double best = s.gamma(0.0);
  auto consider = [&](double t) {
    const double g = s.gamma(t);
    if (better(g, best)) best = g;
  };
  constexpr int kGrid = 4096;
  for (int k = 1; k <= kGrid; ++k) consider(static_cast<double>(k) / kGrid);
  for (double r : sign_changes([&](double t) { return s.eval(t).gamma_dot; }, 0.0, 1.0)) {
    consider(r);
  }
  return best;
}

}  // namespace

double Schedule::gamma_min() const {
  return gamma_extreme(*this, [](double a, double b) { return a < b; });
}

double Schedule::gamma_max() const {
  return gamma_extreme(*this, [](double a, double b) { return a > b; });
}

bool Schedule::gamma_concave() const {
  constexpr int kCells = 2048;
  const double h = 1.0 / kCells;
  for (int k = 1; k < kCells; ++k) {
    const double t = k * h;
    const double second = gamma(t - h) - 2.0 * gamma(t) + gamma(t + h);
    const double scale = std::abs(gamma(t)) + 1.0;
    if (second > 1e-12 * scale) return false;
  }
  return true;
}

void Schedule::validate() const {
  constexpr int kGrid = 4096;
  for (int k = 0; k <= kGrid; ++k) {
    const double t = static_cast<double>(k) / kGrid;
    const double g = gamma(t);
    if (!(g > 0.0) || !std::isfinite(g)) {
      throw DomainError("gamma must be positive on [0, 1]; gamma(" + std::to_string(t) +
                        ") = " + std::to_string(g));
    }
  }
}

double max_derivative_error(const Schedule& s, int grid) {
  double worst = 0.0;
  const double h = 1e-6;
  for (int k = 0; k < grid; ++k) {
    const double t = (k + 0.5) / grid;
    const double lo = std::max(0.0, t - h);
    const double hi = std::min(1.0, t + h);
    const Coefficients a = s.eval(lo), b = s.eval(hi), c = s.eval(t);
    const double span = hi - lo;
    const double fd[3] = {(b.alpha - a.alpha) / span, (b.beta - a.beta) / span,
                          (b.gamma - a.gamma) / span};
    const double an[3] = {c.alpha_dot, c.beta_dot, c.gamma_dot};
    for (int j = 0; j < 3; ++j) {
      worst = std::max(worst, std::abs(fd[j] - an[j]) / std::max(1.0, std::abs(an[j])));
    }
  }
  return worst;
}

double log_gamma_total_variation(const Schedule& s, const QuadratureSpec& quad) {
  return integrate_abs([&](double t) { return s.eval(t).gamma_dot; },
                       [&](double t) { return 1.0 / s.gamma(t); }, 0.0, 1.0, quad)
      .value;
}

ScheduleIntegrals schedule_integrals(const Schedule& s, double radius, const QuadratureSpec& quad) {
  if (radius < 0.0) throw DomainError("schedule_integrals: R must be >= 0");
  auto inv_gamma = [&](double t) { return 1.0 / s.gamma(t); };
  const auto g = integrate_abs([&](double t) { return s.eval(t).gamma_dot; }, inv_gamma, 0.0,
                               1.0, quad);
  const auto a = integrate_abs([&](double t) { return s.eval(t).alpha_dot; }, inv_gamma, 0.0,
                               1.0, quad);
  const auto b = integrate_abs([&](double t) { return s.eval(t).beta_dot; }, inv_gamma, 0.0,
                               1.0, quad);
  ScheduleIntegrals out;
  out.i_gamma = g.value;
  out.i_alpha = a.value;
  out.i_beta = b.value;
  out.c = std::exp(radius * (out.i_alpha + out.i_beta));
  out.error_estimate = g.error_estimate + a.error_estimate + b.error_estimate;
  return out;
}

}  // namespace fmlab
