// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "fmlab/rng.hpp"
#include "fmlab/types.hpp"

namespace fmlab {

/// Weighted Gaussian mixture sum_i w_i N(m_i, S_i) on R^d. Components built
/// with a scalar variance are flagged isotropic and take the sigma^2 I fast
/// path in every consumer.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vec> means, std::vector<Mat> covariances);

  /// Components N(m_i, sigma_i^2 I).
  GaussianMixture(std::vector<double> weights, std::vector<Vec> means, std::vector<double> sigmas);

  static GaussianMixture isotropic(std::vector<double> weights, std::vector<Vec> means,
                                   double sigma);
  static GaussianMixture gaussian(const Vec& mean, const Mat& covariance);
  static GaussianMixture standard_normal(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }

  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Vec& mean(std::size_t i) const { return means_[i]; }
  const Mat& covariance(std::size_t i) const { return covariances_[i]; }
  bool is_isotropic(std::size_t i) const { return isotropic_[i]; }
  /// sigma_i^2 for isotropic components; undefined otherwise.
  double isotropic_variance(std::size_t i) const { return iso_var_[i]; }
  bool all_isotropic() const;

  /// Square roots of the smallest / largest covariance eigenvalue over components.
  double sigma_min() const;
  double sigma_max() const;
  double max_mean_norm() const;

  Vec mixture_mean() const;
  Mat mixture_covariance() const;

  /// Lower Cholesky factor of component i's covariance (eigen square root
  /// fallback for numerically semidefinite inputs).
  const Mat& sqrt_covariance(std::size_t i) const { return sqrt_cov_[i]; }

 private:
  void finalize();

  Eigen::Index dim_ = 0;
  std::vector<double> weights_;
  std::vector<Vec> means_;
  std::vector<Mat> covariances_;
  std::vector<bool> isotropic_;
  std::vector<double> iso_var_;
  std::vector<Mat> sqrt_cov_;
};

/// n i.i.d. draws as columns of a d x n matrix.
PointSet sample(const GaussianMixture& gm, std::size_t n, RngStream& rng);

/// Log mixture density with log-sum-exp stabilisation.
double log_density(const GaussianMixture& gm, const Vec& x);

/// Effective radius replacing a bounded-support radius for Gaussian mixtures.
struct SupportRadius {
  double radius = 0.0;
  double quantile = 0.999;
  double ci_low = 0.0;   // 95% order-statistic interval for the q-quantile of |X|
  double ci_high = 0.0;
  double tail_mass = 0.0;  // empirical mass outside the closed ball of radius `radius`
  std::size_t n_samples = 0;
};

/// Smallest R with estimated mass(B(0,R)) >= q, floored at max_i |m_i|.
/// Requires 0.9 <= q < 1.
SupportRadius effective_support_radius(const GaussianMixture& gm, double q, RngStream& rng,
                                       std::size_t n_samples = 1'000'000);

/// Exact law of coeff * X + noise_scale * Z for X ~ gm, Z ~ N(0, I).
GaussianMixture relax_boundary(const GaussianMixture& gm, double coeff, double noise_scale);

/// Exact law of a X0 + b X1 + s Z for independent X0 ~ gm0, X1 ~ gm1,
/// Z ~ N(0, I): K0 * K1 components. Throws SizeError above `max_components`.
GaussianMixture linear_combination(double a, const GaussianMixture& gm0, double b,
                                   const GaussianMixture& gm1, double noise_scale = 0.0,
                                   std::size_t max_components = 10'000);

}  // namespace fmlab
