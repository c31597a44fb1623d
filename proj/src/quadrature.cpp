// SPDX-License-Identifier: Apache-2.0

#include "fmlab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "fmlab/errors.hpp"

namespace fmlab {

namespace {

GaussLegendreRule build_rule(int n) {
  GaussLegendreRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  if (n == 1) {
    rule.weights[0] = 2.0;
    return rule;
  }
  // Legendre P_n and its derivative at x by the three-term recurrence.
  auto legendre = [n](double x, double& deriv) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    deriv = n * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double p = legendre(x, dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(x, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

double panel(const std::function<double(double)>& f, double a, double b,
             const GaussLegendreRule& rule) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(mid + half * rule.nodes[k]);
  return s * half;
}

void refine(const std::function<double(double)>& f, double a, double b, double whole,
            const GaussLegendreRule& rule, double tol, int depth, int max_depth,
            QuadratureResult& acc) {
  const double mid = 0.5 * (a + b);
  const double left = panel(f, a, mid, rule);
  const double right = panel(f, mid, b, rule);
  const double diff = std::abs(left + right - whole);
  if (diff <= tol || depth >= max_depth) {
    acc.value += left + right;
    acc.error_estimate += diff;
    return;
  }
  refine(f, a, mid, left, rule, 0.5 * tol, depth + 1, max_depth, acc);
  refine(f, mid, b, right, rule, 0.5 * tol, depth + 1, max_depth, acc);
}

}  // namespace

const GaussLegendreRule& gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: order must be >= 1");
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureSpec& spec) {
  QuadratureResult acc;
  if (b == a) return acc;
  const auto& rule = gauss_legendre(spec.order);
  const double width = (b - a) / spec.panels;
  const double per_panel_tol = spec.abs_tol / spec.panels;
  for (int p = 0; p < spec.panels; ++p) {
    const double lo = a + p * width;
    const double hi = (p + 1 == spec.panels) ? b : lo + width;
    refine(f, lo, hi, panel(f, lo, hi, rule), rule, per_panel_tol, 0, spec.max_depth, acc);
  }
  if (!std::isfinite(acc.value) || acc.error_estimate > spec.abs_tol) {
    throw NumericError("quadrature did not converge", acc.error_estimate);
  }
  return acc;
}

std::vector<double> sign_changes(const std::function<double(double)>& g, double a, double b,
                                 int scan_points) {
  std::vector<double> roots;
  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  double x_prev = a;
  int s_prev = sign(g(a));
  for (int k = 1; k <= scan_points; ++k) {
    const double x = (k == scan_points) ? b : a + (b - a) * k / scan_points;
    const int s = sign(g(x));
    if (s != 0 && s_prev != 0 && s != s_prev) {
      double lo = x_prev, hi = x;
      for (int it = 0; it < 200 && hi - lo > 4e-16 * std::max(1.0, std::abs(hi)); ++it) {
        const double m = 0.5 * (lo + hi);
        if (sign(g(m)) == s_prev) lo = m; else hi = m;
      }
      const double root = 0.5 * (lo + hi);
      if (root > a && root < b) roots.push_back(root);
    }
    if (s != 0) {
      s_prev = s;
      x_prev = x;
    } else if (s_prev == 0) {
      x_prev = x;
    }
  }
  return roots;
}

QuadratureResult integrate_abs(const std::function<double(double)>& g,
                               const std::function<double(double)>& h, double a, double b,
                               const QuadratureSpec& spec) {
  std::vector<double> cuts{a};
  for (double r : sign_changes(g, a, b, spec.scan_points)) cuts.push_back(r);
  cuts.push_back(b);
  QuadratureResult total;
  QuadratureSpec piece = spec;
  piece.abs_tol = spec.abs_tol / static_cast<double>(cuts.size() - 1);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const auto r = integrate([&](double t) { return std::abs(g(t)) * h(t); }, cuts[k],
                             cuts[k + 1], piece);
    total.value += r.value;
    total.error_estimate += r.error_estimate;
  }
  return total;
}

double simpson_uniform(const std::vector<double>& values, double a, double b) {
  const std::size_t n = values.size();
  if (n < 2) throw DomainError("simpson_uniform: need at least two samples");
  const double h = (b - a) / static_cast<double>(n - 1);
  if (n % 2 == 0) {
    double s = 0.5 * (values.front() + values.back());
    for (std::size_t k = 1; k + 1 < n; ++k) s += values[k];
    return s * h;
  }
  double s = values.front() + values.back();
  for (std::size_t k = 1; k + 1 < n; ++k) s += (k % 2 == 1 ? 4.0 : 2.0) * values[k];
  return s * h / 3.0;
}

}  // namespace fmlab
