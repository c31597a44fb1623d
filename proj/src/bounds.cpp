// SPDX-License-Identifier: Apache-2.0

#include "fmlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fmlab/errors.hpp"

namespace fmlab {

const char* to_string(Theorem t) {
  switch (t) {
    case Theorem::T3_1: return "T3_1";
    case Theorem::T3_2: return "T3_2";
    case Theorem::T3_8: return "T3_8";
    case Theorem::T3_9: return "T3_9";
    case Theorem::C3_10: return "C3_10";
    case Theorem::C4_3_VP: return "C4_3_VP";
    case Theorem::C4_3_VE: return "C4_3_VE";
    case Theorem::T4_4_VP: return "T4_4_VP";
    case Theorem::T4_4_VE: return "T4_4_VE";
  }
  return "unknown";
}

double default_slack(double rhs) { return std::max(1e-6, 1e-3 * std::abs(rhs)); }

BoundReport make_report(Theorem theorem, std::string instance, double lhs, double rhs,
                        std::map<std::string, double> constituents, std::string note) {
  BoundReport r;
  r.theorem = theorem;
  r.instance = std::move(instance);
  r.lhs_measured = lhs;
  r.rhs_computed = rhs;
  r.constituents = std::move(constituents);
  r.slack = default_slack(rhs);
  r.pass = lhs <= rhs + r.slack;
  r.note = std::move(note);
  return r;
}

namespace {

double need(const BoundReport& r, const std::string& key) {
  const auto it = r.constituents.find(key);
  if (it == r.constituents.end()) {
    throw DomainError(std::string("recompute_rhs: ") + to_string(r.theorem) + " lacks '" + key + "'");
  }
  return it->second;
}

}  // namespace

double recompute_rhs(const BoundReport& r) {
  switch (r.theorem) {
    case Theorem::T3_1:
      return rhs_theorem_3_1(need(r, "epsilon"), need(r, "lipschitz_integral"));
    case Theorem::T3_2: {
      ScheduleIntegrals si;
      si.i_gamma = need(r, "i_gamma");
      si.i_alpha = need(r, "i_alpha");
      si.i_beta = need(r, "i_beta");
      return rhs_theorem_3_2(need(r, "lambda"), need(r, "R"), si);
    }
    case Theorem::T3_8:
      return rhs_theorem_3_8(need(r, "epsilon"), need(r, "lambda"), need(r, "C"),
                             need(r, "gamma_min"), need(r, "gamma_max"));
    case Theorem::T3_9:
      return rhs_theorem_3_9(need(r, "epsilon"), need(r, "lambda"), need(r, "C"),
                             need(r, "gamma_min"), need(r, "gamma_max"), need(r, "d"));
    case Theorem::C3_10:
      return std::log(need(r, "factor"));
    case Theorem::C4_3_VP:
      return rhs_corollary_4_3(PfodeVariant::VP, need(r, "lambda"), need(r, "gamma_1"));
    case Theorem::C4_3_VE:
      return rhs_corollary_4_3(PfodeVariant::VE, need(r, "lambda"), need(r, "gamma_1"));
    case Theorem::T4_4_VP:
      return rhs_theorem_4_4(PfodeVariant::VP, need(r, "epsilon"), need(r, "lambda"),
                             need(r, "gamma_1"));
    case Theorem::T4_4_VE:
      return rhs_theorem_4_4(PfodeVariant::VE, need(r, "epsilon"), need(r, "lambda"),
                             need(r, "gamma_1"));
  }
  throw DomainError("recompute_rhs: unknown theorem");
}

double rhs_theorem_3_1(double epsilon, double lipschitz_integral) {
  if (epsilon < 0.0 || lipschitz_integral < 0.0) {
    throw DomainError("rhs_theorem_3_1: arguments must be >= 0");
  }
  return epsilon * std::exp(lipschitz_integral);
}

double rhs_theorem_3_2(double lambda, double radius, const ScheduleIntegrals& si) {
  if (lambda < 0.0 || radius < 0.0) throw DomainError("rhs_theorem_3_2: lambda, R must be >= 0");
  return lambda * si.i_gamma + std::sqrt(lambda) * radius * (si.i_alpha + si.i_beta);
}

double rhs_theorem_3_2(double lambda, double radius, const Schedule& s, const QuadratureSpec& quad) {
  return rhs_theorem_3_2(lambda, radius, schedule_integrals(s, radius, quad));
}

double rhs_theorem_3_8(double epsilon, double lambda, double c, double gamma_min,
                       double gamma_max) {
  if (!(gamma_min > 0.0) || gamma_max < gamma_min) {
    throw DomainError("rhs_theorem_3_8: requires gamma_max >= gamma_min > 0");
  }
  return std::pow(c, std::sqrt(lambda)) * epsilon * std::pow(gamma_max / gamma_min, 2.0 * lambda);
}

double rhs_theorem_3_9(double epsilon, double lambda, double c, double gamma_min,
                       double gamma_max, double d) {
  if (d < 1.0) throw DomainError("rhs_theorem_3_9: d must be >= 1");
  return rhs_theorem_3_8(epsilon, lambda, c, gamma_min, gamma_max) + std::sqrt(d) * gamma_min;
}

double rhs_corollary_4_3(PfodeVariant variant, double lambda, double gamma1) {
  if (!(gamma1 > 0.0 && gamma1 <= 1.0)) throw DomainError("rhs_corollary_4_3: needs 0 < gamma_1 <= 1");
  const double l = std::log(1.0 / gamma1);
  return variant == PfodeVariant::VP ? lambda * (1.0 + l) : lambda * l;
}

double rhs_theorem_4_4(PfodeVariant variant, double epsilon, double lambda, double gamma1) {
  if (!(gamma1 > 0.0 && gamma1 <= 1.0)) throw DomainError("rhs_theorem_4_4: needs 0 < gamma_1 <= 1");
  const double base = variant == PfodeVariant::VP ? std::numbers::e / gamma1 : 1.0 / gamma1;
  return epsilon * std::pow(base, lambda);
}

std::function<double(double)> kt_profile(double lambda, double radius, const Schedule& s,
                                         KtSetting setting) {
  const double sl = std::sqrt(lambda);
  return [=](double t) {
    const Coefficients c = s.eval(t);
    const double head = lambda * std::abs(c.gamma_dot) / c.gamma;
    switch (setting) {
      case KtSetting::General: {
        if (c.alpha == 0.0 || c.beta == 0.0) {
          std::ostringstream msg;
          msg << "kt_profile: alpha_t or beta_t vanishes at t = " << t;
          throw DomainError(msg.str());
        }
        return head + sl * radius *
                          (std::abs(c.alpha_dot) / std::abs(c.alpha) +
                           std::abs(c.beta_dot) / std::abs(c.beta));
      }
      case KtSetting::Pfode: {
        const double by_gamma = sl * radius * std::abs(c.beta_dot) / c.gamma;
        if (c.beta_dot == 0.0) return head;
        if (c.beta == 0.0) return head + by_gamma;
        return head + std::min(lambda * std::abs(c.beta_dot) / std::abs(c.beta), by_gamma);
      }
      case KtSetting::Envelope:
        return head + sl * radius * (std::abs(c.alpha_dot) + std::abs(c.beta_dot)) / c.gamma;
    }
    return head;
  };
}

double kt_integral(double lambda, double radius, const Schedule& s, KtSetting setting,
                   const QuadratureSpec& quad) {
  const auto k = kt_profile(lambda, radius, s, setting);
  std::vector<double> cuts{0.0};
  for (double x : sign_changes([&s](double t) { return s.eval(t).gamma_dot; }, 0.0, 1.0,
                               quad.scan_points)) {
    cuts.push_back(x);
  }
  if (setting == KtSetting::Pfode) {
    // Branch switch of the min; located on the same scan.
    const double sl = std::sqrt(lambda);
    auto diff = [&](double t) {
      const Coefficients c = s.eval(t);
      return lambda * c.gamma - sl * radius * c.beta;
    };
    for (double x : sign_changes(diff, 0.0, 1.0, quad.scan_points)) cuts.push_back(x);
  }
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  QuadratureSpec spec = quad;
  spec.abs_tol = std::max(quad.abs_tol, 1e-9);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] > cuts[i]) total += integrate(k, cuts[i], cuts[i + 1], spec).value;
  }
  return total;
}

double gamma_min_rule(double epsilon, double lambda, double d) {
  return std::pow(d, -1.0 / (4.0 * lambda + 2.0)) * std::pow(epsilon, 1.0 / (2.0 * lambda + 1.0));
}

GammaMinOptimum optimal_gamma_min(double epsilon, double lambda, double d, double c,
                                  double gamma_max, int grid) {
  if (!(epsilon > 0.0)) throw DomainError("optimal_gamma_min: epsilon must be > 0");
  if (grid < 2) throw DomainError("optimal_gamma_min: grid needs >= 2 points");
  GammaMinOptimum out;
  out.rhs_at_minimizer = std::numeric_limits<double>::infinity();
  const double lo = std::log(1e-12);
  const double hi = std::log(gamma_max);
  for (int k = 0; k < grid; ++k) {
    const double g = std::exp(lo + (hi - lo) * k / (grid - 1));
    const double v = rhs_theorem_3_9(epsilon, lambda, c, g, gamma_max, d);
    if (v < out.rhs_at_minimizer) {
      out.rhs_at_minimizer = v;
      out.minimizer = g;
    }
  }
  out.rule = gamma_min_rule(epsilon, lambda, d);
  out.ratio = out.minimizer / out.rule;
  return out;
}

}  // namespace fmlab
