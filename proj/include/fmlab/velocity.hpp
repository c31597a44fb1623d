// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fmlab/mixtures.hpp"
#include "fmlab/regularity.hpp"
#include "fmlab/rng.hpp"
#include "fmlab/schedules.hpp"
#include "fmlab/types.hpp"

namespace fmlab {

/// A time-dependent vector field on R^d with a spatial Jacobian.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vec velocity(const Vec& x, double t) const = 0;
  /// (k, l) entry is d v_k / d x_l.
  virtual Mat jacobian(const Vec& x, double t) const = 0;
};

/// Field given by two callables; used for closed-form test dynamics.
class FunctionVelocityField final : public VelocityField {
 public:
  using ValueFn = std::function<Vec(const Vec&, double)>;
  using JacobianFn = std::function<Mat(const Vec&, double)>;
  FunctionVelocityField(Eigen::Index dim, ValueFn value, JacobianFn jac);
  Eigen::Index dim() const override { return dim_; }
  Vec velocity(const Vec& x, double t) const override { return value_(x, t); }
  Mat jacobian(const Vec& x, double t) const override { return jac_(x, t); }

 private:
  Eigen::Index dim_;
  ValueFn value_;
  JacobianFn jac_;
};

/// v(x, t) = A x.
class LinearVelocityField final : public VelocityField {
 public:
  explicit LinearVelocityField(Mat a) : a_(std::move(a)) {}
  static LinearVelocityField scalar(Eigen::Index dim, double a) {
    return LinearVelocityField(a * Mat::Identity(dim, dim));
  }
  Eigen::Index dim() const override { return a_.rows(); }
  Vec velocity(const Vec& x, double) const override { return a_ * x; }
  Mat jacobian(const Vec&, double) const override { return a_; }

 private:
  Mat a_;
};

enum class Endpoint { X0, X1 };

/// Conditional moments of (X_0, X_1, Z) given X_t = x, assembled over the
/// component-pair posterior by the law of total covariance.
struct PosteriorMoments {
  Vec mean_x0;
  Vec mean_x1;
  Vec mean_z;
  Mat cov_x0_z;  // (k, l) = cov(X0_k, Z_l | X_t = x)
  Mat cov_x1_z;
  Mat cov_z_z;
};

/// Expected velocity E[alpha' X_0 + beta' X_1 + gamma' Z | X_t = x] for
/// independent Gaussian-mixture endpoints, computed exactly over the K0 * K1
/// component pairs. Pair posteriors use log-sum-exp; pairs more than 45 nats
/// below the best are dropped.
class ExactVelocityField final : public VelocityField {
 public:
  /// Throws SizeError when K0 * K1 exceeds 1e4.
  ExactVelocityField(GaussianMixture pi0, GaussianMixture pi1, Schedule schedule);

  Eigen::Index dim() const override { return pi0_.dim(); }
  /// Throws DomainError where gamma_t <= 0.
  Vec velocity(const Vec& x, double t) const override;
  /// (gamma'/gamma) I - (1/gamma) cov_x(X_t', Z).
  Mat jacobian(const Vec& x, double t) const override { return velocity_jacobian(x, t); }
  Mat velocity_jacobian(const Vec& x, double t) const;
  /// Probability-flow form (gamma'/gamma) I - (gamma'/gamma - beta'/beta) cov_x(Z).
  /// Throws PreconditionError unless alpha vanishes identically, DomainError
  /// where beta_t <= 0.
  Mat velocity_jacobian_pfode(const Vec& x, double t) const;

  Vec conditional_mean(const Vec& x, double t, Endpoint which) const;
  /// -(1/gamma) cov_x(X_which, Z).
  Mat conditional_mean_jacobian(const Vec& x, double t, Endpoint which) const;

  PosteriorMoments posterior(const Vec& x, double t, bool with_covariances = true) const;
  /// Normalised pair weights w_ij(x, t), row-major in (i, j); pruned pairs are 0.
  std::vector<double> pair_weights(const Vec& x, double t) const;

  const GaussianMixture& pi0() const noexcept { return pi0_; }
  const GaussianMixture& pi1() const noexcept { return pi1_; }
  const Schedule& schedule() const noexcept { return schedule_; }

  struct Slice;

 private:
  std::shared_ptr<const Slice> slice(double t) const;

  GaussianMixture pi0_;
  GaussianMixture pi1_;
  Schedule schedule_;
  std::vector<double> log_pair_weight_;
  std::uint64_t id_;
};

/// Time profile multiplying the perturbation amplitude.
struct TimeProfile {
  enum class Kind { Constant, Window, SinPi };
  Kind kind = Kind::Constant;
  double lo = 0.0;  // Window support [lo, hi]
  double hi = 1.0;

  static TimeProfile constant() { return {}; }
  static TimeProfile window(double lo, double hi);
  static TimeProfile sin_pi() { return {Kind::SinPi, 0.0, 1.0}; }
  double operator()(double t) const;
  /// Interior points where the profile is not smooth.
  std::vector<double> breakpoints() const;
};

/// v_theta(x, t) = v^X(x, t) + c p(t) sin(w.x + phi) u with |u| = 1.
class PerturbedVelocityField final : public VelocityField {
 public:
  /// Normalises `direction`; throws DomainError if it is zero, if the
  /// frequency dimension mismatches, or if amplitude < 0.
  PerturbedVelocityField(std::shared_ptr<const ExactVelocityField> base, double amplitude,
                         Vec frequency, double phase, Vec direction,
                         TimeProfile profile = TimeProfile::constant());

  Eigen::Index dim() const override { return base_->dim(); }
  Vec velocity(const Vec& x, double t) const override;
  Mat jacobian(const Vec& x, double t) const override;
  Vec perturbation(const Vec& x, double t) const;
  /// Lipschitz constant of the perturbation term at time t: c |p(t)| |w|.
  double lipschitz_increment(double t) const;

  const ExactVelocityField& base() const noexcept { return *base_; }
  std::shared_ptr<const ExactVelocityField> base_ptr() const noexcept { return base_; }
  double amplitude() const noexcept { return amplitude_; }
  const Vec& frequency() const noexcept { return frequency_; }
  double phase() const noexcept { return phase_; }
  const Vec& direction() const noexcept { return direction_; }
  const TimeProfile& profile() const noexcept { return profile_; }

 private:
  std::shared_ptr<const ExactVelocityField> base_;
  double amplitude_;
  Vec frequency_;
  double phase_;
  Vec direction_;
  TimeProfile profile_;
};

/// One draw of the interpolant: endpoints, noise, X_t and its time derivative.
struct InterpolantDraw {
  Vec x0;
  Vec x1;
  Vec z;
  Vec xt;
  Vec xt_dot;
};

InterpolantDraw draw_interpolant(const GaussianMixture& pi0, const GaussianMixture& pi1,
                                 const Coefficients& c, RngStream& rng);

/// Time rule for the L2 error: `nodes` Gauss-Legendre nodes on each smooth
/// piece of the time profile.
struct TimeQuadrature {
  int nodes = 16;
};

struct L2ErrorEstimate {
  double epsilon = 0.0;         // sqrt of the closed-form epsilon^2
  double epsilon_sq = 0.0;
  double mc_epsilon_sq = 0.0;   // plain stratified Monte Carlo
  double mc_std_error = 0.0;    // standard error of mc_epsilon_sq
  double ci_low = 0.0;          // 95% interval for epsilon from the Monte Carlo run
  double ci_high = 0.0;
  double cv_epsilon_sq = 0.0;   // Monte Carlo with the closed form as control variate
  std::size_t n_mc = 0;
};

/// Integral over t of E |v_theta(X_t, t) - v^X(X_t, t)|^2. Requires n_mc >= 1000.
L2ErrorEstimate l2_error(const PerturbedVelocityField& v, std::size_t n_mc,
                         const TimeQuadrature& tq, RngStream& rng);

/// Closed-form epsilon^2 of the perturbation: the time integral of
/// c^2 p(t)^2 E sin^2(w.X_t + phi), by adaptive quadrature on each smooth piece.
double l2_error_closed_form(const PerturbedVelocityField& v);

/// Closed-form E sin^2(w.X + phi) for X ~ gm.
double expected_sin_squared(const GaussianMixture& gm, const Vec& w, double phi);

struct LipschitzPoint {
  double t = 0.0;
  double l_hat = 0.0;      // probe-sup of |Jacobian|_op, including any analytic increment
  double increment = 0.0;  // analytic perturbation part (0 for the exact field)
  Vec x_star;
};

/// Probe-sup of the exact-field Jacobian norm on samples of X_t plus ridge
/// points between the component means of the signal law, per time.
std::vector<LipschitzPoint> lipschitz_profile(const ExactVelocityField& f,
                                              const std::vector<double>& t_grid,
                                              const ProbeSpec& probes, RngStream& rng);
/// As above plus the analytic increment c |p(t)| |w|.
std::vector<LipschitzPoint> lipschitz_profile(const PerturbedVelocityField& f,
                                              const std::vector<double>& t_grid,
                                              const ProbeSpec& probes, RngStream& rng);

/// Integral of a profile over its grid (Simpson on uniform odd grids,
/// trapezoid otherwise).
double integrate_profile(const std::vector<LipschitzPoint>& profile);

struct ObjectiveGap {
  double gap_direct = 0.0;      // mean |v1 - X'|^2 - |v2 - X'|^2
  double gap_regression = 0.0;  // mean |v1 - v^X|^2 - |v2 - v^X|^2
  double ci = 0.0;              // 1.96 standard errors of the paired difference
  bool pass = false;            // |gap_direct - gap_regression| <= 3 ci
  std::size_t n_mc = 0;
};

/// Shared-sample comparison of the two forms of the matching objective with
/// t ~ U(0, 1) and X_t drawn from the interpolant of `truth`.
ObjectiveGap objective_gap_check(const VelocityField& v1, const VelocityField& v2,
                                 const ExactVelocityField& truth, std::size_t n_mc,
                                 RngStream& rng);

}  // namespace fmlab
