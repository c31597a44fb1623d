// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmlab/mixtures.hpp"
#include "fmlab/rng.hpp"
#include "fmlab/schedules.hpp"
#include "fmlab/types.hpp"

namespace fmlab {

/// Ridge added to every component covariance before conditioning, so that
/// subspace-supported Gaussians stay numerically invertible.
inline constexpr double kCovarianceRidge = 1e-12;

/// cov(xi | W + xi = x) for W ~ w and xi ~ N(0, tau^2 I), by per-component
/// Gaussian conditioning and the law of total covariance.
/// Throws DomainError for tau <= 0.
Mat noise_posterior_covariance(const GaussianMixture& w, double tau, const Vec& x);

enum class ProbeStrategy { Grid, SampledFromNoisy, AdversarialRidge };

struct ProbeSpec {
  /// Strategies are cumulative: every listed strategy contributes probes.
  std::vector<ProbeStrategy> strategies{ProbeStrategy::SampledFromNoisy,
                                        ProbeStrategy::AdversarialRidge};
  std::size_t n_samples = 128;   // draws of W' per tau
  int grid_per_axis = 9;         // Grid strategy, over the bounding box of W' mass
  std::vector<double> ridge_fractions{0.25, 0.5, 0.75};
};

std::string describe(const ProbeSpec& spec);

/// Deterministic probes when `spec.strategies` has AdversarialRidge (empty otherwise):
/// component means, the mixture mean, and points at `ridge_fractions` along
/// segments between means (all pairs up to 16 components, nearest 4
/// neighbours beyond).
std::vector<Vec> ridge_probes(const GaussianMixture& w, const ProbeSpec& spec);

/// Probe-sup of |cov(xi | W'=x)|_op / tau^2 over a tau grid and probe points.
/// `lambda_hat` is a lower bound on the true supremum over x and tau.
struct RegularityEstimate {
  double lambda_hat = 0.0;
  std::optional<double> lambda_cert;
  std::vector<double> tau_grid;
  std::string x_grid_spec;
  double tau_star = 0.0;
  Vec x_star;
};

/// `count` log-spaced scales spanning [sigma_min / 10, 10 (R + sigma_max)].
std::vector<double> default_tau_grid(const GaussianMixture& w, int count = 33);

/// Analytic certificate: 1 for a single (possibly degenerate) Gaussian,
/// 1 + R^2 / sigma^2 for an isotropic mixture with common sigma and
/// max |m_i| <= R. Empty otherwise.
std::optional<double> regularity_certificate(const GaussianMixture& w);

RegularityEstimate estimate_lambda(const GaussianMixture& w, const std::vector<double>& tau_grid,
                                   const ProbeSpec& probes, RngStream& rng);

struct MarginalRegularity {
  double t = 0.0;
  RegularityEstimate estimate;
};

/// Lambda profile of alpha_t X_0 + beta_t X_1 over `t_grid` (exact K0*K1
/// mixture per t). Throws SizeError for K0*K1 > 1e4.
std::vector<MarginalRegularity> interpolant_marginal_regularity(
    const GaussianMixture& pi0, const GaussianMixture& pi1, const Schedule& s,
    const std::vector<double>& t_grid, const ProbeSpec& probes, RngStream& rng,
    int tau_count = 33);

/// Largest per-time certificate of alpha_t X_0 + beta_t X_1 over `grid`
/// uniform times in [0, 1]; empty if any time lacks a certificate.
std::optional<double> interpolant_regularity_certificate(const GaussianMixture& pi0,
                                                         const GaussianMixture& pi1,
                                                         const Schedule& s, int grid = 1001);

/// Law of alpha_t X_0 + beta_t X_1 with the conditioning ridge applied.
GaussianMixture interpolant_signal_law(const GaussianMixture& pi0, const GaussianMixture& pi1,
                                       double alpha, double beta);

struct HighProbabilityCheck {
  double violation_rate = 0.0;
  double bound = 0.0;            // 6 d exp(-c^2 / 2)
  double ci_half_width = 0.0;    // 95% binomial half-width at the measured rate
  double threshold = 0.0;        // 2 d c^2 tau^2
  std::size_t n_samples = 0;
  bool pass = false;             // rate <= bound + 3 * ci_half_width
};

HighProbabilityCheck high_probability_cov_check(const GaussianMixture& w, double tau, double c,
                                                std::size_t n_samples, RngStream& rng);

}  // namespace fmlab
