// SPDX-License-Identifier: Apache-2.0

#include "fmlab/velocity.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "fmlab/errors.hpp"
#include "fmlab/metrics.hpp"
#include "fmlab/parallel.hpp"
#include "fmlab/quadrature.hpp"

namespace fmlab {

namespace {

constexpr double kPruneLogGap = 45.0;
constexpr std::size_t kMaxPairs = 10'000;

std::atomic<std::uint64_t> next_field_id{1};

}  // namespace

FunctionVelocityField::FunctionVelocityField(Eigen::Index dim, ValueFn value, JacobianFn jac)
    : dim_(dim), value_(std::move(value)), jac_(std::move(jac)) {}

// Per-time conditioning data for every component pair. For pair (i, j) the
// observation X_t has covariance C = a^2 S_i + b^2 T_j + g^2 I.
struct ExactVelocityField::Slice {
  struct Pair {
    std::size_t i = 0;
    std::size_t j = 0;
    double log_base = 0.0;  // log(mu_i nu_j) - (log det C + d log 2 pi) / 2
    bool iso = false;
    double p = 0.0;   // isotropic: C^{-1} = p I, a S_i C^{-1} = a0 I, ...
    double a0 = 0.0;
    double a1 = 0.0;
    double zz = 0.0;
    Mat prec;  // full covariance counterparts
    Mat a0m;
    Mat a1m;
    Mat zzm;
    Vec shift;  // a m_i + b n_j
  };
  double t = 0.0;
  Coefficients c;
  std::vector<Pair> pairs;
};

ExactVelocityField::ExactVelocityField(GaussianMixture pi0, GaussianMixture pi1, Schedule schedule)
    : pi0_(std::move(pi0)), pi1_(std::move(pi1)), schedule_(std::move(schedule)),
      id_(next_field_id.fetch_add(1)) {
  if (pi0_.dim() != pi1_.dim()) throw DomainError("velocity: endpoint dimensions differ");
  if (pi0_.size() * pi1_.size() > kMaxPairs) {
    throw SizeError("velocity: component pair count exceeds 1e4");
  }
  for (std::size_t i = 0; i < pi0_.size(); ++i) {
    for (std::size_t j = 0; j < pi1_.size(); ++j) {
      const double w = pi0_.weight(i) * pi1_.weight(j);
      log_pair_weight_.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
    }
  }
}

std::shared_ptr<const ExactVelocityField::Slice> ExactVelocityField::slice(double t) const {
  struct Entry {
    std::uint64_t id = 0;
    double t = std::numeric_limits<double>::quiet_NaN();
    std::shared_ptr<const Slice> slice;
  };
  thread_local std::array<Entry, 4> cache;
  thread_local std::size_t cursor = 0;
  for (const Entry& e : cache) {
    if (e.id == id_ && e.t == t) return e.slice;
  }

  auto out = std::make_shared<Slice>();
  out->t = t;
  out->c = schedule_.eval(t);
  const Coefficients& c = out->c;
  if (!(c.gamma > 0.0)) throw DomainError("velocity: gamma_t must be positive");
  const Eigen::Index d = dim();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double g2 = c.gamma * c.gamma;
  std::size_t k = 0;
  for (std::size_t i = 0; i < pi0_.size(); ++i) {
    for (std::size_t j = 0; j < pi1_.size(); ++j, ++k) {
      if (!std::isfinite(log_pair_weight_[k])) continue;
      Slice::Pair p;
      p.i = i;
      p.j = j;
      p.shift = c.alpha * pi0_.mean(i) + c.beta * pi1_.mean(j);
      if (pi0_.is_isotropic(i) && pi1_.is_isotropic(j)) {
        p.iso = true;
        const double s0 = c.alpha * c.alpha * pi0_.isotropic_variance(i);
        const double s1 = c.beta * c.beta * pi1_.isotropic_variance(j);
        const double cv = s0 + s1 + g2;
        p.p = 1.0 / cv;
        p.a0 = c.alpha * pi0_.isotropic_variance(i) * p.p;
        p.a1 = c.beta * pi1_.isotropic_variance(j) * p.p;
        p.zz = (s0 + s1) * p.p;
        p.log_base = log_pair_weight_[k] - 0.5 * d * (std::log(cv) + log2pi);
      } else {
        const Mat& s0 = pi0_.covariance(i);
        const Mat& s1 = pi1_.covariance(j);
        const Mat signal = c.alpha * c.alpha * s0 + c.beta * c.beta * s1;
        const Mat cm = signal + g2 * Mat::Identity(d, d);
        const Eigen::LLT<Mat> llt(cm);
        if (llt.info() != Eigen::Success) throw NumericError("velocity: pair covariance not PD", 0.0);
        p.prec = llt.solve(Mat::Identity(d, d));
        p.prec = 0.5 * (p.prec + p.prec.transpose());
        p.a0m = c.alpha * s0 * p.prec;
        p.a1m = c.beta * s1 * p.prec;
        p.zzm = signal * p.prec;
        const Mat l = llt.matrixL();
        const double logdet = 2.0 * l.diagonal().array().log().sum();
        p.log_base = log_pair_weight_[k] - 0.5 * (logdet + d * log2pi);
      }
      out->pairs.push_back(std::move(p));
    }
  }
  std::shared_ptr<const Slice> result = out;
  cache[cursor] = Entry{id_, t, result};
  cursor = (cursor + 1) % cache.size();
  return result;
}

namespace {

// Pair posteriors at x: residuals, C^{-1} r and normalised weights.
struct PairState {
  Mat r;
  Mat pr;
  std::vector<double> w;
};

PairState pair_state(const ExactVelocityField::Slice& sl, const Vec& x) {
  const auto np = static_cast<Eigen::Index>(sl.pairs.size());
  const Eigen::Index d = x.size();
  PairState st;
  st.r.resize(d, np);
  st.pr.resize(d, np);
  st.w.resize(sl.pairs.size());
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < np; ++k) {
    const auto& p = sl.pairs[k];
    st.r.col(k) = x - p.shift;
    if (p.iso) {
      st.pr.col(k) = p.p * st.r.col(k);
    } else {
      st.pr.col(k).noalias() = p.prec * st.r.col(k);
    }
    st.w[k] = p.log_base - 0.5 * st.r.col(k).dot(st.pr.col(k));
    top = std::max(top, st.w[k]);
  }
  double total = 0.0;
  for (double& w : st.w) {
    w = w < top - kPruneLogGap ? 0.0 : std::exp(w - top);
    total += w;
  }
  for (double& w : st.w) w /= total;
  return st;
}

}  // namespace

PosteriorMoments ExactVelocityField::posterior(const Vec& x, double t, bool with_covariances) const {
  if (x.size() != dim()) throw DomainError("velocity: point dimension mismatch");
  const auto sl = slice(t);
  const PairState st = pair_state(*sl, x);
  const Eigen::Index d = dim();
  const auto np = static_cast<Eigen::Index>(sl->pairs.size());
  const double g = sl->c.gamma;

  Mat e0(d, np), e1(d, np), ez(d, np);
  PosteriorMoments out;
  out.mean_x0 = Vec::Zero(d);
  out.mean_x1 = Vec::Zero(d);
  out.mean_z = Vec::Zero(d);
  for (Eigen::Index k = 0; k < np; ++k) {
    if (st.w[k] == 0.0) continue;
    const auto& p = sl->pairs[k];
    if (p.iso) {
      e0.col(k) = pi0_.mean(p.i) + p.a0 * st.r.col(k);
      e1.col(k) = pi1_.mean(p.j) + p.a1 * st.r.col(k);
    } else {
      e0.col(k) = pi0_.mean(p.i);
      e0.col(k).noalias() += p.a0m * st.r.col(k);
      e1.col(k) = pi1_.mean(p.j);
      e1.col(k).noalias() += p.a1m * st.r.col(k);
    }
    ez.col(k) = g * st.pr.col(k);
    out.mean_x0 += st.w[k] * e0.col(k);
    out.mean_x1 += st.w[k] * e1.col(k);
    out.mean_z += st.w[k] * ez.col(k);
  }
  if (!with_covariances) return out;

  out.cov_x0_z = Mat::Zero(d, d);
  out.cov_x1_z = Mat::Zero(d, d);
  out.cov_z_z = Mat::Zero(d, d);
  for (Eigen::Index k = 0; k < np; ++k) {
    const double w = st.w[k];
    if (w == 0.0) continue;
    const auto& p = sl->pairs[k];
    if (p.iso) {
      out.cov_x0_z.diagonal().array() -= w * g * p.a0;
      out.cov_x1_z.diagonal().array() -= w * g * p.a1;
      out.cov_z_z.diagonal().array() += w * p.zz;
    } else {
      out.cov_x0_z -= (w * g) * p.a0m;
      out.cov_x1_z -= (w * g) * p.a1m;
      out.cov_z_z += w * p.zzm;
    }
    const Vec dz = ez.col(k) - out.mean_z;
    out.cov_x0_z.noalias() += w * (e0.col(k) - out.mean_x0) * dz.transpose();
    out.cov_x1_z.noalias() += w * (e1.col(k) - out.mean_x1) * dz.transpose();
    out.cov_z_z.noalias() += w * dz * dz.transpose();
  }
  return out;
}

std::vector<double> ExactVelocityField::pair_weights(const Vec& x, double t) const {
  const auto sl = slice(t);
  const PairState st = pair_state(*sl, x);
  std::vector<double> out(pi0_.size() * pi1_.size(), 0.0);
  for (std::size_t k = 0; k < sl->pairs.size(); ++k) {
    out[sl->pairs[k].i * pi1_.size() + sl->pairs[k].j] = st.w[k];
  }
  return out;
}

Vec ExactVelocityField::velocity(const Vec& x, double t) const {
  const Coefficients c = slice(t)->c;
  const PosteriorMoments m = posterior(x, t, false);
  return c.alpha_dot * m.mean_x0 + c.beta_dot * m.mean_x1 + c.gamma_dot * m.mean_z;
}

Mat ExactVelocityField::velocity_jacobian(const Vec& x, double t) const {
  const Coefficients c = slice(t)->c;
  const PosteriorMoments m = posterior(x, t, true);
  const Eigen::Index d = dim();
  const Mat cross = c.alpha_dot * m.cov_x0_z + c.beta_dot * m.cov_x1_z + c.gamma_dot * m.cov_z_z;
  return (c.gamma_dot / c.gamma) * Mat::Identity(d, d) - cross / c.gamma;
}

Mat ExactVelocityField::velocity_jacobian_pfode(const Vec& x, double t) const {
  if (!schedule_.alpha_vanishes()) {
    throw PreconditionError("velocity_jacobian_pfode: alpha must vanish identically");
  }
  const Coefficients c = slice(t)->c;
  if (!(c.beta > 0.0)) throw DomainError("velocity_jacobian_pfode: beta_t must be positive");
  const PosteriorMoments m = posterior(x, t, true);
  const Eigen::Index d = dim();
  const double g = c.gamma_dot / c.gamma;
  return g * Mat::Identity(d, d) - (g - c.beta_dot / c.beta) * m.cov_z_z;
}

Vec ExactVelocityField::conditional_mean(const Vec& x, double t, Endpoint which) const {
  const PosteriorMoments m = posterior(x, t, false);
  return which == Endpoint::X0 ? m.mean_x0 : m.mean_x1;
}

Mat ExactVelocityField::conditional_mean_jacobian(const Vec& x, double t, Endpoint which) const {
  const double g = slice(t)->c.gamma;
  const PosteriorMoments m = posterior(x, t, true);
  return -(which == Endpoint::X0 ? m.cov_x0_z : m.cov_x1_z) / g;
}

TimeProfile TimeProfile::window(double lo, double hi) {
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) {
    throw DomainError("time profile: window needs 0 <= lo < hi <= 1");
  }
  return {Kind::Window, lo, hi};
}

double TimeProfile::operator()(double t) const {
  switch (kind) {
    case Kind::Constant: return 1.0;
    case Kind::Window: return (t >= lo && t <= hi) ? 1.0 : 0.0;
    case Kind::SinPi: return std::sin(std::numbers::pi * t);
  }
  return 0.0;
}

std::vector<double> TimeProfile::breakpoints() const {
  std::vector<double> out;
  if (kind == Kind::Window) {
    if (lo > 0.0) out.push_back(lo);
    if (hi < 1.0) out.push_back(hi);
  }
  return out;
}

PerturbedVelocityField::PerturbedVelocityField(std::shared_ptr<const ExactVelocityField> base,
                                               double amplitude, Vec frequency, double phase,
                                               Vec direction, TimeProfile profile)
    : base_(std::move(base)), amplitude_(amplitude), frequency_(std::move(frequency)),
      phase_(phase), direction_(std::move(direction)), profile_(profile) {
  if (!base_) throw DomainError("perturbed field: missing base field");
  if (!(amplitude_ >= 0.0)) throw DomainError("perturbed field: amplitude must be >= 0");
  if (frequency_.size() != base_->dim() || direction_.size() != base_->dim()) {
    throw DomainError("perturbed field: frequency/direction dimension mismatch");
  }
  const double n = direction_.norm();
  if (!(n > 0.0)) throw DomainError("perturbed field: direction must be non-zero");
  direction_ /= n;
}

Vec PerturbedVelocityField::perturbation(const Vec& x, double t) const {
  return (amplitude_ * profile_(t) * std::sin(frequency_.dot(x) + phase_)) * direction_;
}

Vec PerturbedVelocityField::velocity(const Vec& x, double t) const {
  return base_->velocity(x, t) + perturbation(x, t);
}

Mat PerturbedVelocityField::jacobian(const Vec& x, double t) const {
  const double s = amplitude_ * profile_(t) * std::cos(frequency_.dot(x) + phase_);
  return base_->velocity_jacobian(x, t) + s * direction_ * frequency_.transpose();
}

double PerturbedVelocityField::lipschitz_increment(double t) const {
  return amplitude_ * std::abs(profile_(t)) * frequency_.norm();
}

namespace {

Vec draw_component(const GaussianMixture& gm, RngStream& rng) {
  std::size_t i = 0;
  if (gm.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    i = gm.size() - 1;
    for (std::size_t k = 0; k < gm.size(); ++k) {
      acc += gm.weight(k);
      if (u < acc) {
        i = k;
        break;
      }
    }
  }
  return gm.mean(i) + gm.sqrt_covariance(i) * rng.normal_vector(gm.dim());
}

}  // namespace

InterpolantDraw draw_interpolant(const GaussianMixture& pi0, const GaussianMixture& pi1,
                                 const Coefficients& c, RngStream& rng) {
  InterpolantDraw out;
  out.x0 = draw_component(pi0, rng);
  out.x1 = draw_component(pi1, rng);
  out.z = rng.normal_vector(pi0.dim());
  out.xt = c.alpha * out.x0 + c.beta * out.x1 + c.gamma * out.z;
  out.xt_dot = c.alpha_dot * out.x0 + c.beta_dot * out.x1 + c.gamma_dot * out.z;
  return out;
}

double expected_sin_squared(const GaussianMixture& gm, const Vec& w, double phi) {
  double out = 0.0;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    const double q = w.dot(gm.covariance(i) * w);
    out += gm.weight(i) * 0.5 * (1.0 - std::cos(2.0 * (w.dot(gm.mean(i)) + phi)) * std::exp(-2.0 * q));
  }
  return out;
}

namespace {

// E sin^2(w.X_t + phi) for the interpolant law at coefficients c, without
// materialising the K0 * K1 mixture.
double interpolant_sin_squared(const GaussianMixture& pi0, const GaussianMixture& pi1,
                               const Coefficients& c, const Vec& w, double phi) {
  const double wz = w.squaredNorm();
  double out = 0.0;
  for (std::size_t i = 0; i < pi0.size(); ++i) {
    const double q0 = w.dot(pi0.covariance(i) * w);
    const double m0 = w.dot(pi0.mean(i));
    for (std::size_t j = 0; j < pi1.size(); ++j) {
      const double q = c.alpha * c.alpha * q0 + c.beta * c.beta * w.dot(pi1.covariance(j) * w) +
                       c.gamma * c.gamma * wz;
      const double m = c.alpha * m0 + c.beta * w.dot(pi1.mean(j));
      out += pi0.weight(i) * pi1.weight(j) * 0.5 *
             (1.0 - std::cos(2.0 * (m + phi)) * std::exp(-2.0 * q));
    }
  }
  return out;
}

std::vector<double> profile_pieces(const TimeProfile& p) {
  std::vector<double> cuts{0.0};
  for (double b : p.breakpoints()) cuts.push_back(b);
  cuts.push_back(1.0);
  return cuts;
}

}  // namespace

double l2_error_closed_form(const PerturbedVelocityField& v) {
  const ExactVelocityField& base = v.base();
  const double c2 = v.amplitude() * v.amplitude();
  if (c2 == 0.0) return 0.0;
  auto integrand = [&](double t) {
    const double p = v.profile()(t);
    if (p == 0.0) return 0.0;
    return c2 * p * p *
           interpolant_sin_squared(base.pi0(), base.pi1(), base.schedule().eval(t), v.frequency(),
                                   v.phase());
  };
  const std::vector<double> cuts = profile_pieces(v.profile());
  QuadratureSpec spec;
  spec.panels = 32;
  spec.abs_tol = 1e-12 * std::max(1.0, c2);
  double out = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    out += integrate(integrand, cuts[k], cuts[k + 1], spec).value;
  }
  return out;
}

L2ErrorEstimate l2_error(const PerturbedVelocityField& v, std::size_t n_mc,
                         const TimeQuadrature& tq, RngStream& rng) {
  if (n_mc < 1000) throw DomainError("l2_error: n_mc must be >= 1000");
  const ExactVelocityField& base = v.base();
  const auto& pi0 = base.pi0();
  const auto& pi1 = base.pi1();
  const double c2 = v.amplitude() * v.amplitude();

  L2ErrorEstimate out;
  out.n_mc = n_mc;
  const std::vector<double> cuts = profile_pieces(v.profile());
  out.epsilon_sq = l2_error_closed_form(v);
  out.epsilon = std::sqrt(out.epsilon_sq);

  // Stratified Monte Carlo at Gauss-Legendre nodes of each smooth piece.
  struct Node {
    double t;
    double weight;
  };
  std::vector<Node> nodes;
  const auto& rule = gauss_legendre(tq.nodes);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double half = 0.5 * (cuts[k + 1] - cuts[k]);
    const double mid = 0.5 * (cuts[k + 1] + cuts[k]);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      nodes.push_back({mid + half * rule.nodes[q], half * rule.weights[q]});
    }
  }
  const std::size_t per_node = std::max<std::size_t>(2, n_mc / nodes.size());
  struct NodeStats {
    double mean_y = 0.0, var_y = 0.0, mean_g = 0.0, cov_yg = 0.0, var_g = 0.0, expected_g = 0.0;
  };
  std::vector<NodeStats> stats(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t k) {
    RngStream local = rng.split(k);
    const double t = nodes[k].t;
    const Coefficients c = base.schedule().eval(t);
    const double p = v.profile()(t);
    std::vector<double> ys(per_node), gs(per_node);
    for (std::size_t s = 0; s < per_node; ++s) {
      const InterpolantDraw dr = draw_interpolant(pi0, pi1, c, local);
      ys[s] = (v.velocity(dr.xt, t) - base.velocity(dr.xt, t)).squaredNorm();
      const double sn = std::sin(v.frequency().dot(dr.xt) + v.phase());
      gs[s] = c2 * p * p * sn * sn;
    }
    NodeStats& st = stats[k];
    for (std::size_t s = 0; s < per_node; ++s) {
      st.mean_y += ys[s];
      st.mean_g += gs[s];
    }
    st.mean_y /= per_node;
    st.mean_g /= per_node;
    for (std::size_t s = 0; s < per_node; ++s) {
      st.var_y += (ys[s] - st.mean_y) * (ys[s] - st.mean_y);
      st.var_g += (gs[s] - st.mean_g) * (gs[s] - st.mean_g);
      st.cov_yg += (ys[s] - st.mean_y) * (gs[s] - st.mean_g);
    }
    st.var_y /= per_node - 1;
    st.var_g /= per_node - 1;
    st.cov_yg /= per_node - 1;
    st.expected_g = p == 0.0 ? 0.0
                             : c2 * p * p * interpolant_sin_squared(pi0, pi1, c, v.frequency(), v.phase());
  });
  double var = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const NodeStats& st = stats[k];
    const double w = nodes[k].weight;
    out.mc_epsilon_sq += w * st.mean_y;
    var += w * w * st.var_y / per_node;
    const double b = st.var_g > 0.0 ? st.cov_yg / st.var_g : 0.0;
    out.cv_epsilon_sq += w * (st.mean_y - b * (st.mean_g - st.expected_g));
  }
  out.mc_std_error = std::sqrt(var);
  out.ci_low = std::sqrt(std::max(0.0, out.mc_epsilon_sq - 1.96 * out.mc_std_error));
  out.ci_high = std::sqrt(out.mc_epsilon_sq + 1.96 * out.mc_std_error);
  return out;
}

namespace {

std::vector<LipschitzPoint> exact_profile(const ExactVelocityField& f,
                                          const std::vector<double>& t_grid,
                                          const ProbeSpec& probes, RngStream& rng) {
  std::vector<LipschitzPoint> out(t_grid.size());
  parallel_for(t_grid.size(), [&](std::size_t k) {
    const double t = t_grid[k];
    const Coefficients c = f.schedule().eval(t);
    RngStream local = rng.split(k);
    std::vector<Vec> xs;
    const bool sampled = std::find(probes.strategies.begin(), probes.strategies.end(),
                                   ProbeStrategy::SampledFromNoisy) != probes.strategies.end();
    if (sampled) {
      for (std::size_t s = 0; s < probes.n_samples; ++s) {
        xs.push_back(draw_interpolant(f.pi0(), f.pi1(), c, local).xt);
      }
    }
    if (f.pi0().size() * f.pi1().size() <= 256) {
      const GaussianMixture law = interpolant_signal_law(f.pi0(), f.pi1(), c.alpha, c.beta);
      for (Vec& x : ridge_probes(law, probes)) xs.push_back(std::move(x));
    }
    if (xs.empty()) xs.push_back(Vec::Zero(f.dim()));
    LipschitzPoint& lp = out[k];
    lp.t = t;
    lp.x_star = xs.front();
    lp.l_hat = -1.0;
    for (const Vec& x : xs) {
      const double n = operator_norm(f.velocity_jacobian(x, t));
      if (n > lp.l_hat) {
        lp.l_hat = n;
        lp.x_star = x;
      }
    }
  });
  return out;
}

}  // namespace

std::vector<LipschitzPoint> lipschitz_profile(const ExactVelocityField& f,
                                              const std::vector<double>& t_grid,
                                              const ProbeSpec& probes, RngStream& rng) {
  return exact_profile(f, t_grid, probes, rng);
}

std::vector<LipschitzPoint> lipschitz_profile(const PerturbedVelocityField& f,
                                              const std::vector<double>& t_grid,
                                              const ProbeSpec& probes, RngStream& rng) {
  std::vector<LipschitzPoint> out = exact_profile(f.base(), t_grid, probes, rng);
  for (LipschitzPoint& lp : out) {
    lp.increment = f.lipschitz_increment(lp.t);
    lp.l_hat += lp.increment;
  }
  return out;
}

double integrate_profile(const std::vector<LipschitzPoint>& profile) {
  if (profile.size() < 2) return 0.0;
  const double a = profile.front().t;
  const double b = profile.back().t;
  const double h = (b - a) / (profile.size() - 1);
  bool uniform = true;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    if (std::abs(profile[k].t - (a + k * h)) > 1e-12) uniform = false;
  }
  if (uniform) {
    std::vector<double> values;
    for (const auto& p : profile) values.push_back(p.l_hat);
    return simpson_uniform(values, a, b);
  }
  double out = 0.0;
  for (std::size_t k = 0; k + 1 < profile.size(); ++k) {
    out += 0.5 * (profile[k + 1].t - profile[k].t) * (profile[k].l_hat + profile[k + 1].l_hat);
  }
  return out;
}

ObjectiveGap objective_gap_check(const VelocityField& v1, const VelocityField& v2,
                                 const ExactVelocityField& truth, std::size_t n_mc,
                                 RngStream& rng) {
  if (n_mc < 2) throw DomainError("objective_gap_check: n_mc must be >= 2");
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (n_mc + kChunk - 1) / kChunk;
  std::vector<double> direct(n_mc), regression(n_mc);
  parallel_for(chunks, [&](std::size_t c) {
    RngStream local = rng.split(c);
    const std::size_t end = std::min(n_mc, (c + 1) * kChunk);
    for (std::size_t k = c * kChunk; k < end; ++k) {
      const double t = local.uniform();
      const InterpolantDraw dr =
          draw_interpolant(truth.pi0(), truth.pi1(), truth.schedule().eval(t), local);
      const Vec a1 = v1.velocity(dr.xt, t);
      const Vec a2 = v2.velocity(dr.xt, t);
      const Vec vx = truth.velocity(dr.xt, t);
      direct[k] = (a1 - dr.xt_dot).squaredNorm() - (a2 - dr.xt_dot).squaredNorm();
      regression[k] = (a1 - vx).squaredNorm() - (a2 - vx).squaredNorm();
    }
  });
  ObjectiveGap out;
  out.n_mc = n_mc;
  double mean_diff = 0.0;
  for (std::size_t k = 0; k < n_mc; ++k) {
    out.gap_direct += direct[k];
    out.gap_regression += regression[k];
  }
  out.gap_direct /= n_mc;
  out.gap_regression /= n_mc;
  mean_diff = out.gap_direct - out.gap_regression;
  double var = 0.0;
  for (std::size_t k = 0; k < n_mc; ++k) {
    const double e = direct[k] - regression[k] - mean_diff;
    var += e * e;
  }
  var /= (n_mc - 1);
  out.ci = 1.96 * std::sqrt(var / n_mc);
  out.pass = std::abs(mean_diff) <= 3.0 * out.ci;
  return out;
}

}  // namespace fmlab
