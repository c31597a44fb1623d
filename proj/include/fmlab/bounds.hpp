// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fmlab/quadrature.hpp"
#include "fmlab/schedules.hpp"

namespace fmlab {

enum class Theorem { T3_1, T3_2, T3_8, T3_9, C3_10, C4_3_VP, C4_3_VE, T4_4_VP, T4_4_VE };
const char* to_string(Theorem t);

/// Measured left side against a computed right side. Every number needed to
/// rebuild `rhs_computed` sits in `constituents`.
struct BoundReport {
  Theorem theorem = Theorem::T3_1;
  std::string instance;
  double lhs_measured = 0.0;
  double rhs_computed = 0.0;
  std::map<std::string, double> constituents;
  double slack = 0.0;
  bool pass = false;  // lhs_measured <= rhs_computed + slack
  std::string note;
};

/// max(1e-6, 1e-3 * rhs).
double default_slack(double rhs);

BoundReport make_report(Theorem theorem, std::string instance, double lhs, double rhs,
                        std::map<std::string, double> constituents, std::string note = {});

/// Rebuilds the right-hand side from a report's constituents.
/// Throws DomainError when a required constituent is missing.
double recompute_rhs(const BoundReport& report);

/// epsilon * exp(lipschitz_integral).
double rhs_theorem_3_1(double epsilon, double lipschitz_integral);

/// lambda I_gamma + sqrt(lambda) R (I_alpha + I_beta).
double rhs_theorem_3_2(double lambda, double radius, const ScheduleIntegrals& integrals);
double rhs_theorem_3_2(double lambda, double radius, const Schedule& s,
                       const QuadratureSpec& quad = {});

/// C^sqrt(lambda) epsilon (gamma_max / gamma_min)^(2 lambda).
double rhs_theorem_3_8(double epsilon, double lambda, double c, double gamma_min,
                       double gamma_max);

/// rhs_theorem_3_8 + sqrt(d) gamma_min.
double rhs_theorem_3_9(double epsilon, double lambda, double c, double gamma_min,
                       double gamma_max, double d);

enum class PfodeVariant { VP, VE };

/// VP: lambda (1 + log(1/gamma_1)); VE: lambda log(1/gamma_1). Requires 0 < gamma_1 <= 1.
double rhs_corollary_4_3(PfodeVariant variant, double lambda, double gamma1);

/// VP: epsilon (e / gamma_1)^lambda; VE: epsilon (1 / gamma_1)^lambda.
double rhs_theorem_4_4(PfodeVariant variant, double epsilon, double lambda, double gamma1);

enum class KtSetting {
  General,   // lambda |g'|/g + sqrt(lambda) R (|a'|/a + |b'|/b)
  Pfode,     // lambda |g'|/g + min(lambda |b'|/b, sqrt(lambda) R |b'|/g)
  Envelope,  // lambda |g'|/g + sqrt(lambda) R (|a'| + |b'|)/g
};

/// Lipschitz envelope K_t. The General form throws DomainError (naming t)
/// wherever alpha_t or beta_t is zero.
std::function<double(double)> kt_profile(double lambda, double radius, const Schedule& s,
                                         KtSetting setting);

/// Integral of K_t over [0, 1], split at sign changes of gamma'.
double kt_integral(double lambda, double radius, const Schedule& s, KtSetting setting,
                   const QuadratureSpec& quad = {});

/// d^(-1/(4 lambda + 2)) epsilon^(1/(2 lambda + 1)).
double gamma_min_rule(double epsilon, double lambda, double d);

struct GammaMinOptimum {
  double minimizer = 0.0;  // grid argmin of rhs_theorem_3_9 over gamma_min
  double rule = 0.0;
  double ratio = 0.0;      // minimizer / rule
  double rhs_at_minimizer = 0.0;
};

/// Minimises rhs_theorem_3_9 over `grid` log-spaced gamma_min values in
/// [1e-12, gamma_max], with C and gamma_max held fixed.
GammaMinOptimum optimal_gamma_min(double epsilon, double lambda, double d, double c = 1.0,
                                  double gamma_max = 1.0, int grid = 20001);

}  // namespace fmlab
