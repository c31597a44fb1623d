// SPDX-License-Identifier: Apache-2.0

#include "fmlab/mixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fmlab/errors.hpp"

namespace fmlab {

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vec> means,
                                 std::vector<Mat> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  if (covariances_.size() != weights_.size()) {
    throw DomainError("mixture: weights and covariances differ in length");
  }
  isotropic_.assign(weights_.size(), false);
  iso_var_.assign(weights_.size(), 0.0);
  finalize();
}

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vec> means,
                                 std::vector<double> sigmas)
    : weights_(std::move(weights)), means_(std::move(means)) {
  if (sigmas.size() != weights_.size()) {
    throw DomainError("mixture: weights and sigmas differ in length");
  }
  const Eigen::Index d = means_.empty() ? 0 : means_.front().size();
  isotropic_.assign(weights_.size(), true);
  iso_var_.resize(weights_.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw DomainError("mixture: sigma must be positive");
    iso_var_[i] = sigmas[i] * sigmas[i];
    covariances_.push_back(iso_var_[i] * Mat::Identity(d, d));
  }
  finalize();
}

GaussianMixture GaussianMixture::isotropic(std::vector<double> weights, std::vector<Vec> means,
                                           double sigma) {
  std::vector<double> sigmas(weights.size(), sigma);
  return GaussianMixture(std::move(weights), std::move(means), std::move(sigmas));
}

GaussianMixture GaussianMixture::gaussian(const Vec& mean, const Mat& covariance) {
  return GaussianMixture({1.0}, {mean}, std::vector<Mat>{covariance});
}

GaussianMixture GaussianMixture::standard_normal(Eigen::Index dim) {
  return GaussianMixture({1.0}, {Vec::Zero(dim)}, std::vector<double>{1.0});
}

void GaussianMixture::finalize() {
  if (weights_.empty()) throw DomainError("mixture: needs at least one component");
  if (means_.size() != weights_.size()) throw DomainError("mixture: weights and means differ");
  dim_ = means_.front().size();
  if (dim_ < 1) throw DomainError("mixture: dimension must be >= 1");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("mixture: weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture: weights must sum to 1");
  sqrt_cov_.clear();
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (means_[i].size() != dim_) throw DomainError("mixture: inconsistent mean dimension");
    const Mat& s = covariances_[i];
    if (s.rows() != dim_ || s.cols() != dim_) {
      throw DomainError("mixture: covariance has wrong shape");
    }
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw DomainError("mixture: covariance not symmetric");
    }
    if (isotropic_[i]) {
      sqrt_cov_.push_back(std::sqrt(iso_var_[i]) * Mat::Identity(dim_, dim_));
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(s);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw DomainError("mixture: covariance must be positive definite");
    }
    Eigen::LLT<Mat> llt(s);
    if (llt.info() == Eigen::Success) {
      sqrt_cov_.push_back(llt.matrixL());
    } else {
      sqrt_cov_.push_back(eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal());
    }
  }
}

bool GaussianMixture::all_isotropic() const {
  return std::all_of(isotropic_.begin(), isotropic_.end(), [](bool b) { return b; });
}

double GaussianMixture::sigma_min() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i) {
    const double v = isotropic_[i]
                         ? iso_var_[i]
                         : Eigen::SelfAdjointEigenSolver<Mat>(covariances_[i], Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    best = std::min(best, v);
  }
  return std::sqrt(std::max(best, 0.0));
}

double GaussianMixture::sigma_max() const {
  double best = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double v = isotropic_[i]
                         ? iso_var_[i]
                         : Eigen::SelfAdjointEigenSolver<Mat>(covariances_[i], Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .maxCoeff();
    best = std::max(best, v);
  }
  return std::sqrt(best);
}

double GaussianMixture::max_mean_norm() const {
  double best = 0.0;
  for (const auto& m : means_) best = std::max(best, m.norm());
  return best;
}

Vec GaussianMixture::mixture_mean() const {
  Vec mu = Vec::Zero(dim_);
  for (std::size_t i = 0; i < size(); ++i) mu += weights_[i] * means_[i];
  return mu;
}

Mat GaussianMixture::mixture_covariance() const {
  const Vec mu = mixture_mean();
  Mat cov = Mat::Zero(dim_, dim_);
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec dm = means_[i] - mu;
    cov += weights_[i] * (covariances_[i] + dm * dm.transpose());
  }
  return cov;
}

PointSet sample(const GaussianMixture& gm, std::size_t n, RngStream& rng) {
  if (n < 1) throw DomainError("sample: n must be >= 1");
  std::vector<double> cumulative(gm.size());
  std::partial_sum(gm.weights().begin(), gm.weights().end(), cumulative.begin());
  PointSet out(gm.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = gm.size() == 1 ? 0 : rng.categorical(cumulative);
    const Vec z = rng.normal_vector(gm.dim());
    out.col(static_cast<Eigen::Index>(k)) = gm.mean(i) + gm.sqrt_covariance(i) * z;
  }
  return out;
}

double log_density(const GaussianMixture& gm, const Vec& x) {
  const double d = static_cast<double>(gm.dim());
  std::vector<double> terms;
  terms.reserve(gm.size());
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (gm.weight(i) == 0.0) continue;
    const Vec r = x - gm.mean(i);
    double quad, logdet;
    if (gm.is_isotropic(i)) {
      const double v = gm.isotropic_variance(i);
      quad = r.squaredNorm() / v;
      logdet = d * std::log(v);
    } else {
      const Mat& l = gm.sqrt_covariance(i);
      const Vec y = l.triangularView<Eigen::Lower>().solve(r);
      quad = y.squaredNorm();
      logdet = 2.0 * l.diagonal().array().abs().log().sum();
    }
    terms.push_back(std::log(gm.weight(i)) - 0.5 * (quad + logdet + d * std::log(2.0 * std::numbers::pi)));
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

SupportRadius effective_support_radius(const GaussianMixture& gm, double q, RngStream& rng,
                                       std::size_t n_samples) {
  if (!(q >= 0.9 && q < 1.0)) throw DomainError("effective_support_radius: need 0.9 <= q < 1");
  const PointSet xs = sample(gm, n_samples, rng);
  std::vector<double> norms(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k) norms[k] = xs.col(static_cast<Eigen::Index>(k)).norm();
  std::sort(norms.begin(), norms.end());
  const double n = static_cast<double>(n_samples);
  auto order_stat = [&](double idx) {
    const auto k = static_cast<std::size_t>(std::clamp(std::ceil(idx), 1.0, n)) - 1;
    return norms[k];
  };
  const double half = 1.96 * std::sqrt(n * q * (1.0 - q));
  SupportRadius out;
  out.quantile = q;
  out.n_samples = n_samples;
  out.radius = std::max(order_stat(q * n), gm.max_mean_norm());
  out.ci_low = order_stat(q * n - half);
  out.ci_high = order_stat(q * n + half);
  const auto inside = std::upper_bound(norms.begin(), norms.end(), out.radius) - norms.begin();
  out.tail_mass = 1.0 - static_cast<double>(inside) / n;
  return out;
}

GaussianMixture relax_boundary(const GaussianMixture& gm, double coeff, double noise_scale) {
  if (noise_scale < 0.0) throw DomainError("relax_boundary: noise_scale must be >= 0");
  const Eigen::Index d = gm.dim();
  std::vector<Vec> means;
  for (std::size_t i = 0; i < gm.size(); ++i) means.push_back(coeff * gm.mean(i));
  if (gm.all_isotropic()) {
    std::vector<double> sigmas;
    for (std::size_t i = 0; i < gm.size(); ++i) {
      sigmas.push_back(std::sqrt(coeff * coeff * gm.isotropic_variance(i) + noise_scale * noise_scale));
    }
    return GaussianMixture(gm.weights(), std::move(means), std::move(sigmas));
  }
  std::vector<Mat> covs;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    covs.push_back(coeff * coeff * gm.covariance(i) +
                   noise_scale * noise_scale * Mat::Identity(d, d));
  }
  return GaussianMixture(gm.weights(), std::move(means), std::move(covs));
}

GaussianMixture linear_combination(double a, const GaussianMixture& gm0, double b,
                                   const GaussianMixture& gm1, double noise_scale,
                                   std::size_t max_components) {
  if (gm0.dim() != gm1.dim()) throw DomainError("linear_combination: dimension mismatch");
  if (gm0.size() * gm1.size() > max_components) {
    throw SizeError("linear_combination: " + std::to_string(gm0.size() * gm1.size()) +
                    " components exceed cap " + std::to_string(max_components));
  }
  const Eigen::Index d = gm0.dim();
  const double s2 = noise_scale * noise_scale;
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  std::vector<double> vars;
  const bool iso = gm0.all_isotropic() && gm1.all_isotropic();
  for (std::size_t i = 0; i < gm0.size(); ++i) {
    for (std::size_t j = 0; j < gm1.size(); ++j) {
      weights.push_back(gm0.weight(i) * gm1.weight(j));
      means.push_back(a * gm0.mean(i) + b * gm1.mean(j));
      if (iso) {
        vars.push_back(a * a * gm0.isotropic_variance(i) + b * b * gm1.isotropic_variance(j) + s2);
      } else {
        covs.push_back(a * a * gm0.covariance(i) + b * b * gm1.covariance(j) +
                       s2 * Mat::Identity(d, d));
      }
    }
  }
  // Renormalise: products of weights that each sum to 1 can drift by an ulp.
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= total;
  if (iso) {
    for (double& v : vars) v = std::sqrt(v);
    return GaussianMixture(std::move(weights), std::move(means), std::move(vars));
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

}  // namespace fmlab
