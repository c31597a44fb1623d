// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

namespace fmlab {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule, nodes ascending. Rules are cached per n.
const GaussLegendreRule& gauss_legendre(int n);

/// Composite Gauss-Legendre with per-panel bisection refinement.
struct QuadratureSpec {
  int panels = 256;
  int order = 10;
  double abs_tol = 1e-11;
  int max_depth = 40;
  /// Points per sign-change scan of an integrand's derivative factor.
  int scan_points = 4096;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
};

/// Integrates f over [a, b]. Throws NumericError when the summed panel error
/// estimate exceeds spec.abs_tol.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureSpec& spec = {});

/// Points in (a, b) where g changes sign, located by a uniform scan of
/// `scan_points` cells followed by bisection to machine precision.
std::vector<double> sign_changes(const std::function<double(double)>& g, double a, double b,
                                 int scan_points = 4096);

/// Integral of |g| * h over [a, b] computed piecewise between sign changes of g.
QuadratureResult integrate_abs(const std::function<double(double)>& g,
                               const std::function<double(double)>& h, double a, double b,
                               const QuadratureSpec& spec = {});

/// Composite Simpson on uniformly spaced samples (odd count >= 3); falls back
/// to the trapezoid rule for an even count.
double simpson_uniform(const std::vector<double>& values, double a, double b);

}  // namespace fmlab
