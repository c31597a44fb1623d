// SPDX-License-Identifier: Apache-2.0

#include "fmlab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "fmlab/errors.hpp"
#include "fmlab/metrics.hpp"
#include "fmlab/parallel.hpp"
#include "fmlab/quadrature.hpp"

namespace fmlab {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                 e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

Vec solve_rk4(const OdeRhs& f, Vec y, double s, double t_end, const SolverSpec& spec,
              SolverStats* stats, const StepObserver& observer) {
  if (!(spec.h > 0.0)) throw DomainError("rk4: step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil((t_end - s) / spec.h - 1e-9));
  const double h = (t_end - s) / static_cast<double>(std::max<std::size_t>(n, 1));
  double t = s;
  for (std::size_t k = 0; k < std::max<std::size_t>(n, 1); ++k) {
    const Vec k1 = f(t, y);
    const Vec k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const Vec k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const Vec k4 = f(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = (k + 1 == n) ? t_end : s + (k + 1) * h;
    if (stats) ++stats->steps;
    if (observer) observer(t, y);
  }
  return y;
}

Vec solve_rk45(const OdeRhs& f, Vec y, double s, double t_end, const SolverSpec& spec,
               SolverStats* stats, const StepObserver& observer) {
  double t = s;
  double h = 0.01 * (t_end - s);
  Vec k1 = f(t, y);
  while (t < t_end) {
    bool last = false;
    if (t + h >= t_end) {
      h = t_end - t;
      last = true;
    }
    const Vec k2 = f(t + c2 * h, y + h * (a21 * k1));
    const Vec k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const Vec k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = f(t + h, y5);
    const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Vec scale =
        (spec.atol + spec.rtol * y.cwiseAbs().cwiseMax(y5.cwiseAbs()).array()).matrix();
    const double e = std::sqrt((err.array() / scale.array()).square().mean());
    if (!std::isfinite(e)) throw StiffnessError("rk45: non-finite error estimate", t);
    if (e <= 1.0) {
      t = last ? t_end : t + h;
      y = y5;
      k1 = k7;
      if (stats) {
        ++stats->steps;
        stats->max_error_estimate = std::max(stats->max_error_estimate, e);
      }
      if (observer) observer(t, y);
      if (last) break;
    } else if (stats) {
      ++stats->rejected;
    }
    const double factor = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
    h *= factor;
    if (h < spec.h_min) throw StiffnessError("rk45: step size underflow", t);
  }
  return y;
}

}  // namespace

Vec solve_ode(const OdeRhs& f, Vec y0, double s, double t_end, const SolverSpec& spec,
              SolverStats* stats, const StepObserver& observer) {
  if (!(s < t_end)) throw DomainError("solve_ode: requires s < t_end");
  if (observer) observer(s, y0);
  if (spec.kind == SolverSpec::Kind::RK4) return solve_rk4(f, std::move(y0), s, t_end, spec, stats, observer);
  return solve_rk45(f, std::move(y0), s, t_end, spec, stats, observer);
}

namespace {

void merge(SolverStats& into, const SolverStats& part) {
  into.steps += part.steps;
  into.rejected += part.rejected;
  into.max_error_estimate = std::max(into.max_error_estimate, part.max_error_estimate);
}

FlowResult run_flow(const VelocityField& v, const PointSet& starts, double s, double t_end,
                    const SolverSpec& spec, bool with_jacobian) {
  if (!(s < t_end)) throw DomainError("integrate: requires s < t_end");
  const Eigen::Index d = v.dim();
  if (starts.rows() != d) throw DomainError("integrate: start dimension mismatch");
  const auto n = static_cast<std::size_t>(starts.cols());
  FlowResult out;
  out.s = s;
  out.t_end = t_end;
  out.endpoints.resize(d, starts.cols());
  if (spec.record_trajectory) out.trajectories.resize(n);
  if (with_jacobian) {
    out.jacobian_flow.resize(n);
    out.min_jacobian_det.resize(n);
  }
  std::vector<SolverStats> stats(n);

  OdeRhs plain = [&v](double t, const Vec& y) { return v.velocity(y, t); };
  OdeRhs augmented = [&v, d](double t, const Vec& y) {
    Vec dy(y.size());
    const Vec x = y.head(d);
    dy.head(d) = v.velocity(x, t);
    const Eigen::Map<const Mat> j(y.data() + d, d, d);
    Eigen::Map<Mat> dj(dy.data() + d, d, d);
    dj.noalias() = v.jacobian(x, t) * j;
    return dy;
  };

  parallel_for(n, [&](std::size_t p) {
    Vec y0(with_jacobian ? d + d * d : d);
    y0.head(d) = starts.col(static_cast<Eigen::Index>(p));
    if (with_jacobian) {
      Eigen::Map<Mat>(y0.data() + d, d, d).setIdentity();
      out.min_jacobian_det[p] = 1.0;
    }
    StepObserver observer;
    if (spec.record_trajectory || with_jacobian) {
      observer = [&, p](double t, const Vec& y) {
        if (spec.record_trajectory) {
          out.trajectories[p].times.push_back(t);
          out.trajectories[p].states.push_back(y.head(d));
        }
        if (with_jacobian) {
          const double det = Eigen::Map<const Mat>(y.data() + d, d, d).determinant();
          out.min_jacobian_det[p] = std::min(out.min_jacobian_det[p], det);
        }
      };
    }
    const Vec y = solve_ode(with_jacobian ? augmented : plain, std::move(y0), s, t_end, spec,
                            &stats[p], observer);
    out.endpoints.col(static_cast<Eigen::Index>(p)) = y.head(d);
    if (with_jacobian) out.jacobian_flow[p] = Eigen::Map<const Mat>(y.data() + d, d, d);
  });
  for (const auto& st : stats) merge(out.stats, st);
  return out;
}

}  // namespace

FlowResult integrate(const VelocityField& v, const PointSet& starts, double s, double t_end,
                     const SolverSpec& spec) {
  return run_flow(v, starts, s, t_end, spec, false);
}

FlowResult integrate_with_jacobian(const VelocityField& v, const PointSet& starts, double s,
                                   double t_end, const SolverSpec& spec) {
  return run_flow(v, starts, s, t_end, spec, true);
}

GrobnerResidual alekseev_grobner_residual(const VelocityField& v_true,
                                          const VelocityField& v_approx, const Vec& start,
                                          const SolverSpec& spec, double s, int nodes) {
  if (!(s < 1.0)) throw DomainError("alekseev_grobner_residual: requires s < 1");
  const Eigen::Index d = v_true.dim();
  SolverSpec quiet = spec;
  quiet.record_trajectory = false;
  OdeRhs true_rhs = [&v_true](double t, const Vec& y) { return v_true.velocity(y, t); };
  OdeRhs approx_rhs = [&v_approx](double t, const Vec& y) { return v_approx.velocity(y, t); };

  GrobnerResidual out;
  out.lhs = solve_ode(approx_rhs, start, s, 1.0, quiet) - solve_ode(true_rhs, start, s, 1.0, quiet);

  const auto& rule = gauss_legendre(nodes);
  const double half = 0.5 * (1.0 - s);
  const double mid = 0.5 * (1.0 + s);
  std::vector<double> r(rule.nodes.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = mid + half * rule.nodes[k];

  // Positions of the true path at the nodes, by successive restarts.
  std::vector<Vec> path(r.size());
  Vec y = start;
  double t = s;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] > t) y = solve_ode(true_rhs, y, t, r[k], quiet);
    t = r[k];
    path[k] = y;
  }

  std::vector<Vec> terms(r.size());
  parallel_for(r.size(), [&](std::size_t k) {
    PointSet x0 = path[k];
    const FlowResult jf = run_flow(v_approx, x0, r[k], 1.0, quiet, true);
    const Vec mismatch = v_approx.velocity(path[k], r[k]) - v_true.velocity(path[k], r[k]);
    terms[k] = (half * rule.weights[k]) * (jf.jacobian_flow.front() * mismatch);
  });
  out.rhs = Vec::Zero(d);
  for (const Vec& term : terms) out.rhs += term;
  out.residual = (out.lhs - out.rhs).norm();
  return out;
}

PointSet sample_interpolant(const ExactVelocityField& f, double t, std::size_t n, RngStream& rng) {
  const Coefficients c = f.schedule().eval(t);
  PointSet out(f.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    out.col(static_cast<Eigen::Index>(k)) = draw_interpolant(f.pi0(), f.pi1(), c, rng).xt;
  }
  return out;
}

MarginalRun marginal_law_check(const ExactVelocityField& f, std::size_t n,
                               const std::vector<double>& t_checks, RngStream& rng, double s,
                               const SolverSpec& spec) {
  std::vector<double> times = t_checks;
  std::sort(times.begin(), times.end());
  for (double t : times) {
    if (t < s || t > 1.0) throw DomainError("marginal_law_check: check times must lie in [s, 1]");
  }
  RngStream start_rng = rng.split(0);
  PointSet current = sample_interpolant(f, s, n, start_rng);
  double t_now = s;
  MarginalRun out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (t > t_now) {
      current = integrate(f, current, t_now, t, spec).endpoints;
      t_now = t;
    }
    RngStream ra = rng.split(2 * k + 1);
    RngStream rb = rng.split(2 * k + 2);
    const PointSet direct = sample_interpolant(f, t, n, ra);
    const PointSet calibration = sample_interpolant(f, t, n, rb);
    MarginalCheck mc;
    mc.t = t;
    mc.w2_flow_vs_interpolant = w2_empirical(current, direct).w2;
    mc.w2_calibration = w2_empirical(calibration, direct).w2;
    mc.ratio = mc.w2_calibration > 0.0 ? mc.w2_flow_vs_interpolant / mc.w2_calibration
                                       : std::numeric_limits<double>::infinity();
    mc.pass = mc.w2_flow_vs_interpolant <= 2.0 * mc.w2_calibration;
    out.checks.push_back(mc);
    out.pushed.push_back(current);
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const FlowResult& result) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  const Eigen::Index d = result.endpoints.rows();
  os << "particle,t";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x_" << (k + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < result.trajectories.size(); ++p) {
    const Trajectory& tr = result.trajectories[p];
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      os << p << ',' << tr.times[k];
      for (Eigen::Index c = 0; c < d; ++c) os << ',' << tr.states[k][c];
      os << '\n';
    }
  }
}

}  // namespace fmlab
