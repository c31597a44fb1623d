// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fmlab/errors.hpp"
#include "fmlab/metrics.hpp"
#include "fmlab/regularity.hpp"
#include "oracles.hpp"

using namespace fmlab;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

ProbeSpec all_probes(int grid = 41) {
  ProbeSpec p;
  p.strategies = {ProbeStrategy::SampledFromNoisy, ProbeStrategy::AdversarialRidge, ProbeStrategy::Grid};
  p.grid_per_axis = grid;
  return p;
}

}  // namespace

TEST(NoisePosterior, SingleGaussianIsConstantShrinkage) {
  const double sigma = 0.7;
  const auto g = GaussianMixture::isotropic({1.0}, {v2(1, -1)}, sigma);
  RngStream rng(1, 0);
  for (double tau : {0.01, 0.5, 3.0}) {
    const double s2 = sigma * sigma, t2 = tau * tau;
    for (int k = 0; k < 5; ++k) {
      const Mat c = noise_posterior_covariance(g, tau, 5.0 * rng.normal_vector(2));
      // Agreement up to the conditioning ridge.
      EXPECT_LT((c - s2 * t2 / (s2 + t2) * Mat::Identity(2, 2)).norm(), 10 * kCovarianceRidge);
    }
  }
}

TEST(NoisePosterior, NearDegenerateSymmetricPairAtOrigin) {
  // xi | W + xi = 0 takes the values +-1 with equal mass: variance 1.
  const auto w = GaussianMixture::isotropic({0.5, 0.5}, {v1(-1), v1(1)}, 1e-6);
  EXPECT_NEAR(noise_posterior_covariance(w, 1.0, v1(0.0))(0, 0), 1.0, 1e-6);
}

TEST(NoisePosterior, MatchesQuadratureOracle1d) {
  RngStream rng(2, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + trial % 3;
    std::vector<double> w(k), m(k), var(k), sig(k);
    std::vector<Vec> means;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      w[i] = 0.2 + rng.uniform();
      total += w[i];
      m[i] = 3.0 * rng.normal();
      sig[i] = 0.3 + rng.uniform();
      var[i] = sig[i] * sig[i];
      means.push_back(v1(m[i]));
    }
    for (double& x : w) x /= total;
    const GaussianMixture gm(w, means, sig);
    const double tau = 0.05 + 2.0 * rng.uniform();
    const double x = m[trial % k] + 2.0 * rng.normal();
    const double expected = oracle::noise_posterior_variance_1d(w, m, var, tau, x);
    EXPECT_NEAR(noise_posterior_covariance(gm, tau, v1(x))(0, 0), expected, 1e-6)
        << "trial " << trial << " tau " << tau << " x " << x;
  }
}

TEST(NoisePosterior, CollapsesInOneBasin) {
  const auto w = GaussianMixture::isotropic({0.5, 0.5}, {v1(-5), v1(5)}, 0.3);
  const double tau = 0.2;
  const double within = 0.09 * 0.04 / 0.13;
  EXPECT_NEAR(noise_posterior_covariance(w, tau, v1(5.1))(0, 0), within, 1e-12);
}

TEST(NoisePosterior, SymmetricPsdAndPermutationInvariant) {
  Mat cov(2, 2);
  cov << 0.5, 0.2, 0.2, 0.4;
  const GaussianMixture a({0.2, 0.3, 0.5}, {v2(0, 0), v2(2, 1), v2(-1, 2)},
                          {cov, 0.3 * Mat::Identity(2, 2), 0.8 * Mat::Identity(2, 2)});
  const GaussianMixture b({0.5, 0.2, 0.3}, {v2(-1, 2), v2(0, 0), v2(2, 1)},
                          {0.8 * Mat::Identity(2, 2), cov, 0.3 * Mat::Identity(2, 2)});
  RngStream rng(3, 0);
  for (int k = 0; k < 50; ++k) {
    const Vec x = 3.0 * rng.normal_vector(2);
    const double tau = 0.1 + rng.uniform();
    const Mat c = noise_posterior_covariance(a, tau, x);
    EXPECT_LT((c - c.transpose()).norm(), 1e-14);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(c).eigenvalues().minCoeff(), -1e-10);
    EXPECT_LT((c - noise_posterior_covariance(b, tau, x)).norm(), 1e-12);
  }
}

TEST(NoisePosterior, RejectsNonPositiveScale) {
  EXPECT_THROW(noise_posterior_covariance(GaussianMixture::standard_normal(1), 0.0, v1(0)), DomainError);
  EXPECT_THROW(noise_posterior_covariance(GaussianMixture::standard_normal(1), -1.0, v1(0)), DomainError);
}

TEST(NoisePosterior, SmallAndLargeNoiseLimits) {
  const auto w = GaussianMixture::isotropic({0.3, 0.7}, {v2(-1, 0), v2(1, 1)}, 0.8);
  const double r = w.max_mean_norm();
  RngStream rng(4, 0);
  for (int k = 0; k < 20; ++k) {
    const Vec x = 2.0 * rng.normal_vector(2);
    const double small = 0.8e-3;
    EXPECT_NEAR(symmetric_operator_norm(noise_posterior_covariance(w, small, x)) / (small * small), 1.0, 1e-3);
    const double large = 1e3 * r;
    EXPECT_LT(symmetric_operator_norm(noise_posterior_covariance(w, large, x * large)) / (large * large), 1e-5);
  }
}

TEST(EstimateLambda, SingleGaussianAttainsAnalyticSup) {
  const double sigma = 0.6;
  const auto g = GaussianMixture::isotropic({1.0}, {v2(0.5, 0.5)}, sigma);
  const auto grid = default_tau_grid(g, 33);
  ASSERT_EQ(grid.size(), 33u);
  RngStream rng(5, 0);
  const auto est = estimate_lambda(g, grid, all_probes(), rng);
  const double t0 = grid.front();
  EXPECT_NEAR(est.lambda_hat, sigma * sigma / (sigma * sigma + t0 * t0), 1e-9);
  EXPECT_LE(est.lambda_hat, 1.0);
  ASSERT_TRUE(est.lambda_cert.has_value());
  EXPECT_EQ(*est.lambda_cert, 1.0);
}

TEST(EstimateLambda, TauGridSpansRequiredRange) {
  const auto w = GaussianMixture({0.5, 0.5}, {v1(-2), v1(1)}, std::vector<double>{0.2, 0.9});
  const auto grid = default_tau_grid(w, 33);
  EXPECT_LE(grid.front(), 0.2 / 10 + 1e-15);
  EXPECT_GE(grid.back(), 10 * (2.0 + 0.9) - 1e-12);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    EXPECT_NEAR(std::log(grid[k] / grid[k - 1]), std::log(grid[1] / grid[0]), 1e-12);
  }
}

TEST(EstimateLambda, IsotropicMixtureWithinCertificate) {
  const auto w = GaussianMixture::isotropic({0.25, 0.25, 0.5}, {v2(2, 0), v2(-1.2, 1.6), v2(0, -2)}, 1.0);
  RngStream rng(6, 0);
  const auto est = estimate_lambda(w, default_tau_grid(w, 33), all_probes(), rng);
  ASSERT_TRUE(est.lambda_cert.has_value());
  EXPECT_NEAR(*est.lambda_cert, 5.0, 1e-12);
  EXPECT_LE(est.lambda_hat, 5.0 + 1e-6);
  EXPECT_GT(est.lambda_hat, 1.0);
  EXPECT_EQ(est.tau_grid.size(), 33u);
  EXPECT_FALSE(est.x_grid_spec.empty());
  // The recorded argmax reproduces lambda_hat.
  EXPECT_NEAR(symmetric_operator_norm(noise_posterior_covariance(w, est.tau_star, est.x_star)) /
                  (est.tau_star * est.tau_star),
              est.lambda_hat, 1e-12);
}

TEST(EstimateLambda, SubspaceGaussian) {
  const Vec u = v2(0.6, 0.8);
  const Mat cov = u * u.transpose() + kCovarianceRidge * Mat::Identity(2, 2);
  const auto g = GaussianMixture::gaussian(v2(0.3, 0.0), cov);
  RngStream rng(7, 0);
  std::vector<double> grid;
  for (int k = 0; k < 33; ++k) grid.push_back(1e-3 * std::pow(1e4, k / 32.0));
  const auto est = estimate_lambda(g, grid, all_probes(), rng);
  EXPECT_LE(est.lambda_hat, 1.0 + 1e-6);
}

TEST(RegularityCertificate, Cases) {
  EXPECT_EQ(*regularity_certificate(GaussianMixture::standard_normal(3)), 1.0);
  const auto iso = GaussianMixture::isotropic({0.5, 0.5}, {v1(-1.5), v1(1)}, 0.5);
  EXPECT_NEAR(*regularity_certificate(iso), 1.0 + 2.25 / 0.25, 1e-12);
  const auto mixed = GaussianMixture({0.5, 0.5}, {v1(-1), v1(1)}, std::vector<double>{0.5, 0.6});
  EXPECT_FALSE(regularity_certificate(mixed).has_value());
}

TEST(InterpolantRegularity, GaussianEndpointsStayBelowOne) {
  const auto p0 = GaussianMixture::standard_normal(2);
  const auto p1 = GaussianMixture::isotropic({1.0}, {v2(1, 1)}, 0.4);
  const Schedule s = Schedule::generic_concave(1.0, 0.05);
  std::vector<double> ts;
  for (int k = 0; k <= 10; ++k) ts.push_back(k / 10.0);
  RngStream rng(8, 0);
  for (const auto& m : interpolant_marginal_regularity(p0, p1, s, ts, ProbeSpec{}, rng)) {
    EXPECT_LE(m.estimate.lambda_hat, 1.0 + 1e-9) << m.t;
  }
  EXPECT_NEAR(*interpolant_regularity_certificate(p0, p1, s), 1.0, 1e-12);
}

TEST(InterpolantRegularity, StartReducesToFirstEndpoint) {
  const auto p0 = GaussianMixture::isotropic({0.5, 0.5}, {v1(-1), v1(1)}, 0.5);
  const auto p1 = GaussianMixture::standard_normal(1);
  const auto law = interpolant_signal_law(p0, p1, 1.0, 0.0);
  RngStream rng(9, 0);
  for (int k = 0; k < 20; ++k) {
    const Vec x = 2.0 * rng.normal_vector(1);
    EXPECT_NEAR(noise_posterior_covariance(law, 0.3, x)(0, 0), noise_posterior_covariance(p0, 0.3, x)(0, 0),
                1e-9);
  }
  RngStream a(10, 0), b(10, 0);
  const auto prof = interpolant_marginal_regularity(p0, p1, Schedule::generic_concave(1.0, 0.05), {0.0}, ProbeSpec{},
                                                    a, 33);
  const auto direct = estimate_lambda(law, default_tau_grid(law, 33), ProbeSpec{}, b);
  EXPECT_NEAR(prof.front().estimate.lambda_hat, direct.lambda_hat, 1e-9);
}

TEST(InterpolantRegularity, PerTimeMixtureCertificate) {
  const auto p0 = GaussianMixture::standard_normal(1);
  const auto p1 = GaussianMixture::isotropic({0.5, 0.5}, {v1(-1), v1(1)}, 0.5);
  const Schedule s = Schedule::generic_concave(1.0, 0.05);
  std::vector<double> ts;
  for (int k = 0; k <= 20; ++k) ts.push_back(k / 20.0);
  RngStream rng(11, 0);
  const auto prof = interpolant_marginal_regularity(p0, p1, s, ts, all_probes(), rng);
  double worst = 0.0;
  for (const auto& m : prof) {
    const double a = 1.0 - m.t, b = m.t;
    const double cert = 1.0 + (b * 1.0) * (b * 1.0) / (a * a + b * b * 0.25);
    EXPECT_LE(m.estimate.lambda_hat, cert + 1e-6) << m.t;
    worst = std::max(worst, cert);
  }
  // Maximised over t the per-time value peaks at the X_1 end: 1 + 1/0.25.
  EXPECT_NEAR(worst, 5.0, 1e-12);
  EXPECT_NEAR(*interpolant_regularity_certificate(p0, p1, s), 5.0, 1e-9);
}

TEST(InterpolantRegularity, ComponentCapEnforced) {
  std::vector<double> w0(101, 1.0 / 101), w1(100, 1.0 / 100);
  std::vector<Vec> m0(101, v1(0)), m1(100, v1(0));
  const auto p0 = GaussianMixture::isotropic(w0, m0, 1.0);
  const auto p1 = GaussianMixture::isotropic(w1, m1, 1.0);
  RngStream rng(12, 0);
  EXPECT_THROW(interpolant_marginal_regularity(p0, p1, Schedule::generic_concave(1, 0.1), {0.5}, ProbeSpec{}, rng),
               SizeError);
}

TEST(HighProbability, VacuousBoundPasses) {
  RngStream rng(13, 0);
  const auto w = GaussianMixture::isotropic({0.5, 0.5}, {v1(-3), v1(3)}, 0.2);
  const auto h = high_probability_cov_check(w, 0.5, 1.0, 10'000, rng);
  EXPECT_GE(h.bound, 1.0);
  EXPECT_TRUE(h.pass);
}

TEST(HighProbability, SingleGaussianNeverExceeds) {
  RngStream rng(14, 0);
  for (double c : {1.0, 2.0, 3.0}) {
    const auto h = high_probability_cov_check(GaussianMixture::standard_normal(2), 0.7, c, 20'000, rng);
    EXPECT_EQ(h.violation_rate, 0.0);
    EXPECT_NEAR(h.threshold, 2 * 2 * c * c * 0.49, 1e-12);
    EXPECT_NEAR(h.bound, 6 * 2 * std::exp(-c * c / 2), 1e-12);
    EXPECT_TRUE(h.pass);
  }
}

TEST(HighProbability, TwoComponentMixture) {
  RngStream rng(15, 0);
  const double sigma = 0.5;
  const auto w = GaussianMixture::isotropic({0.5, 0.5}, {v1(-1), v1(1)}, sigma);
  const auto h = high_probability_cov_check(w, sigma, 2.0, 100'000, rng);
  EXPECT_NEAR(h.bound, 6.0 * std::exp(-2.0), 1e-12);
  EXPECT_LE(h.violation_rate, h.bound);
  EXPECT_TRUE(h.pass);
  EXPECT_EQ(h.n_samples, 100'000u);
}
