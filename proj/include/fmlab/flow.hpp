// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fmlab/rng.hpp"
#include "fmlab/types.hpp"
#include "fmlab/velocity.hpp"

namespace fmlab {

struct SolverSpec {
  enum class Kind { RK4, RK45 };
  Kind kind = Kind::RK45;
  double h = 1e-3;      // RK4 step
  double rtol = 1e-8;   // RK45 tolerances
  double atol = 1e-8;
  double h_min = 1e-12;
  bool record_trajectory = false;

  static SolverSpec rk4(double h) {
    SolverSpec s;
    s.kind = Kind::RK4;
    s.h = h;
    return s;
  }
  static SolverSpec rk45(double rtol = 1e-8, double atol = 1e-8) {
    SolverSpec s;
    s.rtol = rtol;
    s.atol = atol;
    return s;
  }
};

struct SolverStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  double max_error_estimate = 0.0;  // largest accepted scaled local error (RK45)
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
};

struct FlowResult {
  double s = 0.0;
  double t_end = 1.0;
  PointSet endpoints;                  // d x n
  std::vector<Trajectory> trajectories;  // filled when record_trajectory is set
  std::vector<Mat> jacobian_flow;      // d/dx of the flow map s -> t_end, per particle
  std::vector<double> min_jacobian_det;  // smallest det along each accepted step
  SolverStats stats;
};

/// Generic explicit solve of y' = f(t, y) from s to t_end.
/// `observer` sees the initial state and every accepted step.
using OdeRhs = std::function<Vec(double, const Vec&)>;
using StepObserver = std::function<void(double, const Vec&)>;
Vec solve_ode(const OdeRhs& f, Vec y0, double s, double t_end, const SolverSpec& spec,
              SolverStats* stats = nullptr, const StepObserver& observer = {});

/// Pushes every column of `starts` along dx/dt = v(x, t) from s to t_end.
/// Throws DomainError unless s < t_end, StiffnessError when the adaptive step
/// falls below spec.h_min.
FlowResult integrate(const VelocityField& v, const PointSet& starts, double s, double t_end,
                     const SolverSpec& spec = {});

/// As integrate, augmenting each particle with the variational equation
/// dJ/dt = grad v(x, t) J, J(s) = I.
FlowResult integrate_with_jacobian(const VelocityField& v, const PointSet& starts, double s,
                                   double t_end, const SolverSpec& spec = {});

struct GrobnerResidual {
  Vec lhs;  // endpoint under v_approx minus endpoint under v_true, same start
  Vec rhs;  // integral of J_approx(r -> 1, Y_r) (v_approx - v_true)(Y_r, r) dr
  double residual = 0.0;
};

/// Checks the nonlinear variation-of-constants identity along the v_true
/// path from `start` at time s to 1, with a `nodes`-point Gauss-Legendre rule
/// in r and one Jacobian-flow solve per node.
GrobnerResidual alekseev_grobner_residual(const VelocityField& v_true,
                                          const VelocityField& v_approx, const Vec& start,
                                          const SolverSpec& spec = {}, double s = 0.0,
                                          int nodes = 64);

struct MarginalCheck {
  double t = 0.0;
  double w2_flow_vs_interpolant = 0.0;
  double w2_calibration = 0.0;
  double ratio = 0.0;
  bool pass = false;  // w2_flow_vs_interpolant <= 2 * w2_calibration
};

/// Pushes n draws of the time-s interpolant law along the exact field and
/// compares with fresh interpolant draws at each check time. Check times must
/// lie in [s, 1].
struct MarginalRun {
  std::vector<MarginalCheck> checks;
  std::vector<PointSet> pushed;  // flow samples at each check time
};
MarginalRun marginal_law_check(const ExactVelocityField& f, std::size_t n,
                               const std::vector<double>& t_checks, RngStream& rng,
                               double s = 0.0, const SolverSpec& spec = {});

/// Draws n samples of alpha_t X_0 + beta_t X_1 + gamma_t Z as columns.
PointSet sample_interpolant(const ExactVelocityField& f, double t, std::size_t n, RngStream& rng);

/// CSV with header particle,t,x_1..x_d; one row per recorded state.
void write_trajectory_csv(const std::string& path, const FlowResult& result);

}  // namespace fmlab
