// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fmlab/quadrature.hpp"

namespace fmlab {

/// The six interpolant coefficients at one time.
struct Coefficients {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double alpha_dot = 0.0;
  double beta_dot = 0.0;
  double gamma_dot = 0.0;
};

/// A scalar coefficient function with its analytic derivative.
struct CoefficientFn {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

/// Built-in coefficient functions addressable by identifier, so that config
/// files can declare custom schedules without expression parsing.
///
///   zero, one                 constants
///   constant(c)               c
///   linear(a, b)              a + (b - a) t
///   geometric(a, b)           a^(1-t) b^t            (a, b > 0)
///   sqrt_bridge(R, delta)     2R sqrt((delta + t)(1 + delta - t))
///   sin_bump(lo, hi)          lo + (hi - lo) sin(pi t)
///   cos_quarter(scale, rate)  scale cos(rate t)
///   sin_quarter(scale, rate)  scale sin(rate t)
CoefficientFn named_coefficient(const std::string& id, const std::vector<double>& params = {});

enum class ScheduleKind { GenericConcave, VP, VE, Custom };

const char* to_string(ScheduleKind kind);

/// Interpolant schedule X_t = alpha_t X_0 + beta_t X_1 + gamma_t Z.
/// Immutable after construction.
class Schedule {
 public:
  /// alpha = 1 - t, beta = t, gamma = 2R sqrt((delta + t)(1 + delta - t)).
  static Schedule generic_concave(double radius, double delta);
  /// alpha = 0, beta = sin((pi/2 - delta) t), gamma = R cos((pi/2 - delta) t).
  static Schedule vp(double radius, double delta);
  /// alpha = 0, beta = 1, gamma = gamma0^(1-t) gamma1^t.
  static Schedule ve(double gamma0, double gamma1);
  static Schedule custom(CoefficientFn alpha, CoefficientFn beta, CoefficientFn gamma,
                         std::string label = "custom");

  /// Throws DomainError for t outside [0, 1].
  Coefficients eval(double t) const;

  double alpha(double t) const { return eval(t).alpha; }
  double beta(double t) const { return eval(t).beta; }
  double gamma(double t) const { return eval(t).gamma; }

  ScheduleKind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  /// Relaxation parameter for GenericConcave and VP; 0 otherwise.
  double delta() const noexcept { return delta_; }
  /// Radius parameter for GenericConcave and VP; 0 otherwise.
  double radius() const noexcept { return radius_; }

  /// alpha and its derivative vanish on [0, 1] (PF-ODE setting).
  bool alpha_vanishes() const;

  /// Exact extremes of gamma over [0, 1] (grid plus critical points of gamma).
  double gamma_min() const;
  double gamma_max() const;

  /// gamma concave on [0, 1], tested by second differences on a 2048-cell grid.
  bool gamma_concave() const;

  /// Throws DomainError if gamma_t <= 0 anywhere on a 4097-point grid.
  void validate() const;

 private:
  Schedule(ScheduleKind kind, std::string label, CoefficientFn a, CoefficientFn b,
           CoefficientFn g, double radius, double delta);

  ScheduleKind kind_;
  std::string label_;
  CoefficientFn alpha_;
  CoefficientFn beta_;
  CoefficientFn gamma_;
  double radius_ = 0.0;
  double delta_ = 0.0;
};

/// Largest relative discrepancy between supplied derivatives and central
/// differences of (alpha, beta, gamma) over `grid` points in [0, 1].
double max_derivative_error(const Schedule& s, int grid = 1000);

/// Total variation of log gamma: integral of |gamma'| / gamma over [0, 1].
double log_gamma_total_variation(const Schedule& s, const QuadratureSpec& quad = {});

struct ScheduleIntegrals {
  double i_gamma = 0.0;  // int |gamma'| / gamma
  double i_alpha = 0.0;  // int |alpha'| / gamma
  double i_beta = 0.0;   // int |beta'| / gamma
  double c = 1.0;        // exp(R (i_alpha + i_beta))
  double error_estimate = 0.0;
};

ScheduleIntegrals schedule_integrals(const Schedule& s, double radius,
                                     const QuadratureSpec& quad = {});

}  // namespace fmlab
