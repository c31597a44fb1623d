// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "fmlab/errors.hpp"
#include "fmlab/flow.hpp"
#include "fmlab/mixtures.hpp"
#include "fmlab/velocity.hpp"
#include "oracles.hpp"

using namespace fmlab;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

ExactVelocityField bimodal_field() {
  return ExactVelocityField(GaussianMixture::standard_normal(1),
                            GaussianMixture::isotropic({0.3, 0.7}, {v1(-2.0), v1(2.0)}, 0.4),
                            Schedule::generic_concave(2.5, 0.05));
}

}  // namespace

TEST(SolveOde, LinearGrowthReachesE) {
  const auto lin = LinearVelocityField::scalar(1, 1.0);
  const FlowResult r = integrate(lin, PointSet::Ones(1, 1), 0.0, 1.0, SolverSpec::rk45(1e-10, 1e-10));
  EXPECT_NEAR(r.endpoints(0, 0), std::exp(1.0), 1e-8);
  const FlowResult r4 = integrate(lin, PointSet::Ones(1, 1), 0.0, 1.0, SolverSpec::rk4(1e-3));
  EXPECT_NEAR(r4.endpoints(0, 0), std::exp(1.0), 1e-10);
}

TEST(SolveOde, RungeKuttaFourthOrder) {
  const auto lin = LinearVelocityField::scalar(1, 1.0);
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) {
    err.push_back(std::abs(integrate(lin, PointSet::Ones(1, 1), 0.0, 1.0, SolverSpec::rk4(h)).endpoints(0, 0) -
                           std::exp(1.0)));
  }
  for (int k = 0; k < 2; ++k) {
    const double order = std::log2(err[k] / err[k + 1]);
    EXPECT_GE(order, 3.5);
    EXPECT_LE(order, 4.5);
  }
}

TEST(SolveOde, ObserverSeesEveryAcceptedStep) {
  SolverStats stats;
  std::size_t calls = 0;
  double last = -1.0;
  solve_ode([](double, const Vec& y) { return -y; }, v1(1.0), 0.0, 1.0, SolverSpec::rk4(0.01), &stats,
            [&](double t, const Vec&) {
              EXPECT_GT(t, last);
              last = t;
              ++calls;
            });
  EXPECT_EQ(calls, stats.steps + 1);
  EXPECT_NEAR(last, 1.0, 1e-12);
}

TEST(SolveOde, Errors) {
  const auto lin = LinearVelocityField::scalar(1, 1.0);
  EXPECT_THROW(integrate(lin, PointSet::Ones(1, 1), 0.5, 0.5), DomainError);
  EXPECT_THROW(integrate(lin, PointSet::Ones(1, 1), 0.7, 0.2), DomainError);
  EXPECT_THROW(integrate(lin, PointSet::Ones(2, 1), 0.0, 1.0), DomainError);
  EXPECT_THROW(integrate(lin, PointSet::Ones(1, 1), 0.0, 1.0, SolverSpec::rk4(0.0)), DomainError);
  // x' = x^2 from x(0) = 2 blows up at t = 1/2.
  const FunctionVelocityField blowup(
      1, [](const Vec& x, double) { return Vec(x.array().square()); },
      [](const Vec& x, double) { return Mat::Constant(1, 1, 2.0 * x[0]); });
  EXPECT_THROW(integrate(blowup, PointSet::Constant(1, 1, 2.0), 0.0, 1.0), StiffnessError);
}

TEST(ExactFlow, PointMassEndpointsFollowAffineMap) {
  const Vec a = v2(-1, 0.5), b = v2(2, 1);
  const Schedule s = Schedule::generic_concave(1.0, 0.05);
  const ExactVelocityField f(GaussianMixture::isotropic({1.0}, {a}, 1e-9),
                             GaussianMixture::isotropic({1.0}, {b}, 1e-9), s);
  RngStream rng(1, 0);
  PointSet starts(2, 10);
  for (int k = 0; k < 10; ++k) starts.col(k) = a + 0.3 * rng.normal_vector(2);
  const FlowResult r = integrate(f, starts, 0.0, 1.0, SolverSpec::rk45(1e-10, 1e-10));
  const Coefficients c0 = s.eval(0.0), c1 = s.eval(1.0);
  for (int k = 0; k < 10; ++k) {
    const Vec x0 = starts.col(k);
    const Vec expected = c1.alpha * a + c1.beta * b + (c1.gamma / c0.gamma) * (x0 - c0.alpha * a - c0.beta * b);
    EXPECT_LT((r.endpoints.col(k) - expected).norm(), 1e-6);
  }
}

TEST(ExactFlow, TimeReversalRecoversStart) {
  auto f = std::make_shared<ExactVelocityField>(bimodal_field());
  const FunctionVelocityField back(
      1, [f](const Vec& x, double t) { return Vec(-f->velocity(x, 1.0 - t)); },
      [f](const Vec& x, double t) { return Mat(-f->jacobian(x, 1.0 - t)); });
  RngStream rng(2, 0);
  PointSet starts = sample_interpolant(*f, 0.0, 20, rng);
  const SolverSpec spec = SolverSpec::rk45(1e-10, 1e-10);
  const FlowResult fwd = integrate(*f, starts, 0.0, 1.0, spec);
  const FlowResult rev = integrate(back, fwd.endpoints, 0.0, 1.0, spec);
  EXPECT_LT((rev.endpoints - starts).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ExactFlow, RK45AgreesWithFineRK4) {
  const ExactVelocityField f = bimodal_field();
  RngStream rng(3, 0);
  const PointSet starts = sample_interpolant(f, 0.0, 10, rng);
  const FlowResult a = integrate(f, starts, 0.0, 1.0, SolverSpec::rk45(1e-10, 1e-10));
  const FlowResult b = integrate(f, starts, 0.0, 1.0, SolverSpec::rk4(1e-4));
  EXPECT_LT((a.endpoints - b.endpoints).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(JacobianFlow, LinearFieldIsExponential) {
  const auto lin = LinearVelocityField::scalar(2, 0.7);
  const FlowResult r = integrate_with_jacobian(lin, PointSet::Random(2, 3), 0.0, 1.0, SolverSpec::rk45(1e-10, 1e-10));
  for (const Mat& j : r.jacobian_flow) EXPECT_LT((j - std::exp(0.7) * Mat::Identity(2, 2)).norm(), 1e-8);
  for (double det : r.min_jacobian_det) EXPECT_NEAR(det, 1.0, 1e-12);
}

TEST(JacobianFlow, MatchesFiniteDifferenceOfFlowMap) {
  const ExactVelocityField f(GaussianMixture::standard_normal(2),
                             GaussianMixture::isotropic({0.4, 0.6}, {v2(-1.5, 0.5), v2(1.5, -0.5)}, 0.4),
                             Schedule::generic_concave(2.0, 0.05));
  RngStream rng(4, 0);
  const PointSet starts = sample_interpolant(f, 0.0, 5, rng);
  const SolverSpec spec = SolverSpec::rk45(1e-11, 1e-11);
  const FlowResult r = integrate_with_jacobian(f, starts, 0.0, 1.0, spec);
  for (Eigen::Index k = 0; k < starts.cols(); ++k) {
    EXPECT_GT(r.min_jacobian_det[k], 0.0);
    const double h = 1e-5;
    Mat fd(2, 2);
    for (int c = 0; c < 2; ++c) {
      PointSet p = starts.col(k), m = starts.col(k);
      p(c, 0) += h;
      m(c, 0) -= h;
      fd.col(c) = (integrate(f, p, 0.0, 1.0, spec).endpoints - integrate(f, m, 0.0, 1.0, spec).endpoints) / (2 * h);
    }
    EXPECT_LT((fd - r.jacobian_flow[k]).norm() / std::max(1.0, fd.norm()), 1e-3);
  }
}

TEST(JacobianFlow, BoundedByIntegratedLipschitzConstant) {
  Mat cov(2, 2);
  cov << 0.25, 0.1, 0.1, 1.5;
  const GaussianMixture p1({1.0}, {v2(1.0, -2.0)}, {cov});
  const Schedule s = Schedule::generic_concave(2.0, 0.05);
  const ExactVelocityField f(GaussianMixture::standard_normal(2), p1, s);
  // Velocity is affine here, so the Jacobian at any point is the sup.
  const double integral = oracle::trapezoid(
      [&](double t) {
        Eigen::JacobiSVD<Mat> svd(f.jacobian(Vec::Zero(2), t));
        return svd.singularValues()[0];
      },
      0.0, 1.0, 4000);
  RngStream rng(5, 0);
  const FlowResult r = integrate_with_jacobian(f, sample_interpolant(f, 0.0, 10, rng), 0.0, 1.0);
  for (const Mat& j : r.jacobian_flow) {
    Eigen::JacobiSVD<Mat> svd(j);
    EXPECT_LE(svd.singularValues()[0], std::exp(integral) * (1 + 1e-6));
  }
}

TEST(AlekseevGrobner, IdenticalFieldsGiveZero) {
  const ExactVelocityField f = bimodal_field();
  const GrobnerResidual g = alekseev_grobner_residual(f, f, v1(0.3));
  EXPECT_EQ(g.lhs.norm(), 0.0);
  EXPECT_EQ(g.rhs.norm(), 0.0);
  EXPECT_EQ(g.residual, 0.0);
}

TEST(AlekseevGrobner, ScalarLinearClosedForm) {
  const auto a = LinearVelocityField::scalar(1, 0.5);
  const auto b = LinearVelocityField::scalar(1, 1.2);
  const GrobnerResidual g = alekseev_grobner_residual(a, b, v1(1.0), SolverSpec::rk45(1e-12, 1e-12));
  EXPECT_NEAR(g.lhs[0], std::exp(1.2) - std::exp(0.5), 1e-9);
  EXPECT_LE(g.residual, 1e-10);
}

TEST(AlekseevGrobner, MixtureAgainstPerturbation) {
  auto base = std::make_shared<const ExactVelocityField>(bimodal_field());
  const PerturbedVelocityField p(base, 0.2, v1(1.5), 0.3, v1(1.0));
  RngStream rng(6, 0);
  const PointSet starts = sample_interpolant(*base, 0.0, 20, rng);
  for (Eigen::Index k = 0; k < starts.cols(); ++k) {
    const GrobnerResidual g = alekseev_grobner_residual(*base, p, starts.col(k), SolverSpec::rk45(1e-10, 1e-10));
    EXPECT_GT(g.lhs.norm(), 0.0);
    EXPECT_LE(g.residual, 1e-4 * (1 + g.lhs.norm()));
  }
}

TEST(MarginalLaw, FlowMatchesInterpolantLaw) {
  const ExactVelocityField f = bimodal_field();
  RngStream rng(7, 0);
  const MarginalRun run = marginal_law_check(f, 2000, {0.0, 0.5, 1.0}, rng);
  ASSERT_EQ(run.checks.size(), 3u);
  for (const MarginalCheck& c : run.checks) {
    EXPECT_TRUE(c.pass) << "t=" << c.t << " ratio " << c.ratio;
    EXPECT_LE(c.w2_flow_vs_interpolant, 2.0 * c.w2_calibration);
  }
  // Mode masses at t = 1: 0.7 of the mass sits on the positive mode.
  const PointSet& end = run.pushed.back();
  const double frac = (end.array() > 0.0).cast<double>().mean();
  EXPECT_NEAR(frac, 0.7, 3.0 * std::sqrt(0.21 / 2000));
  EXPECT_THROW(marginal_law_check(f, 100, {0.5}, rng, 0.6), DomainError);
}

TEST(Trajectory, CsvLayout) {
  const auto lin = LinearVelocityField::scalar(2, 1.0);
  SolverSpec spec = SolverSpec::rk4(0.25);
  spec.record_trajectory = true;
  const FlowResult r = integrate(lin, PointSet::Ones(2, 2), 0.0, 1.0, spec);
  ASSERT_EQ(r.trajectories.size(), 2u);
  EXPECT_EQ(r.trajectories[0].times.size(), 5u);
  const auto path = std::filesystem::temp_directory_path() / "fmlab_traj_test.csv";
  write_trajectory_csv(path.string(), r);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "particle,t,x_1,x_2");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 10);
  std::filesystem::remove(path);
}
