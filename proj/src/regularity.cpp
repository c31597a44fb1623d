// SPDX-License-Identifier: Apache-2.0

#include "fmlab/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fmlab/errors.hpp"
#include "fmlab/metrics.hpp"

namespace fmlab {

namespace {

constexpr double kPruneLogGap = 45.0;

struct ComponentPosterior {
  double log_weight;
  Vec mean;  // E[xi | W' = x, component]
  Mat cov;   // cov(xi | W' = x, component)
};

ComponentPosterior condition_component(const GaussianMixture& w, std::size_t i, double tau2,
                                       const Vec& x) {
  const Eigen::Index d = w.dim();
  const Vec r = x - w.mean(i);
  ComponentPosterior out;
  if (w.is_isotropic(i)) {
    const double s = w.isotropic_variance(i) + kCovarianceRidge;
    const double m = s + tau2;
    out.log_weight = std::log(w.weight(i)) -
                     0.5 * (r.squaredNorm() / m + d * std::log(2.0 * std::numbers::pi * m));
    out.mean = (tau2 / m) * r;
    out.cov = (tau2 * s / m) * Mat::Identity(d, d);
    return out;
  }
  const Mat s = w.covariance(i) + kCovarianceRidge * Mat::Identity(d, d);
  const Mat m = s + tau2 * Mat::Identity(d, d);
  const Eigen::LLT<Mat> llt(m);
  const Vec mr = llt.solve(r);
  const Mat l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  out.log_weight = std::log(w.weight(i)) -
                   0.5 * (r.dot(mr) + logdet + d * std::log(2.0 * std::numbers::pi));
  out.mean = tau2 * mr;
  // tau^2 S (S + tau^2 I)^{-1}; S and M commute, so the product is symmetric.
  Mat cov = tau2 * llt.solve(s);
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

}  // namespace

Mat noise_posterior_covariance(const GaussianMixture& w, double tau, const Vec& x) {
  if (!(tau > 0.0)) throw DomainError("noise_posterior_covariance: tau must be > 0");
  const double tau2 = tau * tau;
  const Eigen::Index d = w.dim();
  std::vector<ComponentPosterior> parts;
  parts.reserve(w.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.weight(i) == 0.0) continue;
    parts.push_back(condition_component(w, i, tau2, x));
    top = std::max(top, parts.back().log_weight);
  }
  double total = 0.0;
  std::vector<double> weights(parts.size(), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].log_weight < top - kPruneLogGap) continue;
    weights[k] = std::exp(parts[k].log_weight - top);
    total += weights[k];
  }
  Vec mean = Vec::Zero(d);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    weights[k] /= total;
    if (weights[k] > 0.0) mean += weights[k] * parts[k].mean;
  }
  Mat cov = Mat::Zero(d, d);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const Vec dm = parts[k].mean - mean;
    cov += weights[k] * (parts[k].cov + dm * dm.transpose());
  }
  return cov;
}

std::string describe(const ProbeSpec& spec) {
  std::ostringstream out;
  bool first = true;
  for (auto s : spec.strategies) {
    if (!first) out << "+";
    first = false;
    switch (s) {
      case ProbeStrategy::Grid: out << "grid(" << spec.grid_per_axis << "/axis)"; break;
      case ProbeStrategy::SampledFromNoisy: out << "sampled(" << spec.n_samples << "/tau)"; break;
      case ProbeStrategy::AdversarialRidge: out << "ridge(means+segments)"; break;
    }
  }
  return out.str();
}

std::vector<double> default_tau_grid(const GaussianMixture& w, int count) {
  const double lo = std::max(w.sigma_min(), std::sqrt(kCovarianceRidge)) / 10.0;
  const double hi = 10.0 * (w.max_mean_norm() + w.sigma_max());
  std::vector<double> grid(count);
  for (int k = 0; k < count; ++k) {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    grid[k] = lo * std::pow(hi / lo, f);
  }
  return grid;
}

std::optional<double> regularity_certificate(const GaussianMixture& w) {
  if (w.size() == 1) return 1.0;
  if (!w.all_isotropic()) return std::nullopt;
  const double v = w.isotropic_variance(0);
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (std::abs(w.isotropic_variance(i) - v) > 1e-12 * v) return std::nullopt;
  }
  const double r = w.max_mean_norm();
  return 1.0 + r * r / v;
}

std::vector<Vec> ridge_probes(const GaussianMixture& w, const ProbeSpec& spec) {
  std::vector<Vec> probes;
  const bool ridge = std::find(spec.strategies.begin(), spec.strategies.end(),
                               ProbeStrategy::AdversarialRidge) != spec.strategies.end();
  if (!ridge) return probes;
  const std::size_t k = w.size();
  for (std::size_t i = 0; i < k; ++i) probes.push_back(w.mean(i));
  probes.push_back(w.mixture_mean());
  // Segments between means; for large K only each mean's nearest neighbours.
  constexpr std::size_t kFullPairs = 16;
  constexpr std::size_t kNeighbours = 4;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> partners;
    if (k <= kFullPairs) {
      for (std::size_t j = i + 1; j < k; ++j) partners.push_back(j);
    } else {
      std::vector<std::pair<double, std::size_t>> dist;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i) dist.emplace_back((w.mean(i) - w.mean(j)).squaredNorm(), j);
      }
      const std::size_t keep = std::min(kNeighbours, dist.size());
      std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(keep), dist.end());
      for (std::size_t q = 0; q < keep; ++q) {
        if (dist[q].second > i) partners.push_back(dist[q].second);
      }
    }
    for (std::size_t j : partners) {
      for (double f : spec.ridge_fractions) probes.push_back(w.mean(i) + f * (w.mean(j) - w.mean(i)));
    }
  }
  return probes;
}

namespace {

std::vector<Vec> tau_probes(const GaussianMixture& w, double tau, const ProbeSpec& spec,
                            RngStream& rng) {
  std::vector<Vec> probes;
  for (auto strategy : spec.strategies) {
    if (strategy == ProbeStrategy::SampledFromNoisy && spec.n_samples > 0) {
      const PointSet ws = sample(w, spec.n_samples, rng);
      for (Eigen::Index c = 0; c < ws.cols(); ++c) {
        probes.push_back(ws.col(c) + tau * rng.normal_vector(w.dim()));
      }
    } else if (strategy == ProbeStrategy::Grid) {
      const Eigen::Index d = w.dim();
      Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
      Vec hi = -lo;
      const double spread = 3.0 * (w.sigma_max() + tau);
      for (std::size_t i = 0; i < w.size(); ++i) {
        lo = lo.cwiseMin(w.mean(i) - Vec::Constant(d, spread));
        hi = hi.cwiseMax(w.mean(i) + Vec::Constant(d, spread));
      }
      const int m = std::max(2, spec.grid_per_axis);
      std::vector<int> idx(d, 0);
      while (true) {
        Vec x(d);
        for (Eigen::Index a = 0; a < d; ++a) x[a] = lo[a] + (hi[a] - lo[a]) * idx[a] / (m - 1);
        probes.push_back(x);
        Eigen::Index a = 0;
        while (a < d && ++idx[a] == m) idx[a++] = 0;
        if (a == d) break;
      }
    }
  }
  return probes;
}

}  // namespace

RegularityEstimate estimate_lambda(const GaussianMixture& w, const std::vector<double>& tau_grid,
                                   const ProbeSpec& probes, RngStream& rng) {
  if (tau_grid.empty()) throw DomainError("estimate_lambda: empty tau grid");
  RegularityEstimate out;
  out.tau_grid = tau_grid;
  out.x_grid_spec = describe(probes);
  out.lambda_cert = regularity_certificate(w);
  out.x_star = w.mixture_mean();
  out.tau_star = tau_grid.front();
  const std::vector<Vec> fixed = ridge_probes(w, probes);
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    const double tau = tau_grid[k];
    RngStream local = rng.split(k);
    std::vector<Vec> xs = tau_probes(w, tau, probes, local);
    xs.insert(xs.end(), fixed.begin(), fixed.end());
    for (const Vec& x : xs) {
      const double value = symmetric_operator_norm(noise_posterior_covariance(w, tau, x)) / (tau * tau);
      if (value > out.lambda_hat) {
        out.lambda_hat = value;
        out.tau_star = tau;
        out.x_star = x;
      }
    }
  }
  return out;
}

GaussianMixture interpolant_signal_law(const GaussianMixture& pi0, const GaussianMixture& pi1,
                                       double alpha, double beta) {
  return linear_combination(alpha, pi0, beta, pi1, std::sqrt(kCovarianceRidge));
}

std::optional<double> interpolant_regularity_certificate(const GaussianMixture& pi0,
                                                         const GaussianMixture& pi1,
                                                         const Schedule& s, int grid) {
  double worst = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double t = grid == 1 ? 0.0 : static_cast<double>(k) / (grid - 1);
    const Coefficients c = s.eval(t);
    const auto cert = regularity_certificate(interpolant_signal_law(pi0, pi1, c.alpha, c.beta));
    if (!cert) return std::nullopt;
    worst = std::max(worst, *cert);
  }
  return worst;
}

std::vector<MarginalRegularity> interpolant_marginal_regularity(
    const GaussianMixture& pi0, const GaussianMixture& pi1, const Schedule& s,
    const std::vector<double>& t_grid, const ProbeSpec& probes, RngStream& rng, int tau_count) {
  std::vector<MarginalRegularity> out;
  out.reserve(t_grid.size());
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const Coefficients c = s.eval(t_grid[k]);
    const GaussianMixture law = interpolant_signal_law(pi0, pi1, c.alpha, c.beta);
    RngStream local = rng.split(k);
    out.push_back({t_grid[k], estimate_lambda(law, default_tau_grid(law, tau_count), probes, local)});
  }
  return out;
}

HighProbabilityCheck high_probability_cov_check(const GaussianMixture& w, double tau, double c,
                                                std::size_t n_samples, RngStream& rng) {
  if (c < 1.0) throw DomainError("high_probability_cov_check: c must be >= 1");
  if (!(tau > 0.0)) throw DomainError("high_probability_cov_check: tau must be > 0");
  const double d = static_cast<double>(w.dim());
  HighProbabilityCheck out;
  out.n_samples = n_samples;
  out.threshold = 2.0 * d * c * c * tau * tau;
  out.bound = 6.0 * d * std::exp(-0.5 * c * c);
  const PointSet ws = sample(w, n_samples, rng);
  std::size_t violations = 0;
  for (Eigen::Index k = 0; k < ws.cols(); ++k) {
    const Vec x = ws.col(k) + tau * rng.normal_vector(w.dim());
    if (symmetric_operator_norm(noise_posterior_covariance(w, tau, x)) > out.threshold) ++violations;
  }
  const double n = static_cast<double>(n_samples);
  out.violation_rate = static_cast<double>(violations) / n;
  const double p = out.violation_rate;
  out.ci_half_width = 1.96 * std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
  out.pass = out.violation_rate <= out.bound + 3.0 * out.ci_half_width;
  return out;
}

}  // namespace fmlab
