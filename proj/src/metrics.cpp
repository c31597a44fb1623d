// SPDX-License-Identifier: Apache-2.0

#include "fmlab/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "fmlab/errors.hpp"

namespace fmlab {

namespace {

double power_iteration_sym(const Mat& m, double tol, int max_iter) {
  Vec v = Vec::Ones(m.rows()).normalized();
  double lambda = 0.0;
  // |M v| -> |lambda|_max for unit v; robust to sign alternation.
  for (int it = 0; it < max_iter; ++it) {
    const Vec w = m * v;
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= tol * std::max(1.0, next)) return next;
    lambda = next;
  }
  return lambda;
}

Mat squared_distances(const PointSet& a, const PointSet& b) {
  const Eigen::Index n = a.cols();
  Mat cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) cost(i, j) = (a.col(i) - b.col(j)).squaredNorm();
  }
  return cost;
}

void check_sizes(const PointSet& a, const PointSet& b) {
  if (a.cols() != b.cols() || a.rows() != b.rows()) {
    throw DomainError("point sets differ in size or dimension");
  }
  if (a.cols() == 0) throw DomainError("empty point sets");
}

}  // namespace

const char* to_string(TransportMethod m) {
  switch (m) {
    case TransportMethod::ExactAssignment: return "exact-assignment";
    case TransportMethod::Sinkhorn: return "sinkhorn";
    case TransportMethod::Quantile1D: return "1d-quantile";
  }
  return "unknown";
}

std::vector<int> solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DomainError("solve_assignment: cost matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = cost;
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      const double ui0 = u[i0];
      const double* row = rows.data() + static_cast<std::ptrdiff_t>(i0 - 1) * n - 1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j] - ui0 - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

TransportResult w2_sinkhorn(const PointSet& a, const PointSet& b, const SinkhornOptions& opt) {
  check_sizes(a, b);
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index n = a.cols();
  const Mat cost = squared_distances(a, b);
  std::vector<double> entries(cost.data(), cost.data() + cost.size());
  std::nth_element(entries.begin(), entries.begin() + entries.size() / 2, entries.end());
  const double median = entries[entries.size() / 2];
  const double reg = std::max(opt.reg_fraction * median, 1e-300);
  const double log_n = std::log(static_cast<double>(n));
  Vec f = Vec::Zero(n), g = Vec::Zero(n);
  auto softmin_rows = [&](const Vec& pot, bool over_cols, Vec& out) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double c = over_cols ? cost(i, j) : cost(j, i);
        top = std::max(top, (pot[j] - c) / reg);
      }
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double c = over_cols ? cost(i, j) : cost(j, i);
        acc += std::exp((pot[j] - c) / reg - top);
      }
      out[i] = -reg * (top + std::log(acc) - log_n);
    }
  };
  for (int it = 0; it < opt.max_iterations; ++it) {
    softmin_rows(g, true, f);
    softmin_rows(f, false, g);
    if (it % 10 == 9) {
      // row-marginal error after the column update
      double err = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) row += std::exp((f[i] + g[j] - cost(i, j)) / reg);
        err += std::abs(row / static_cast<double>(n) - 1.0) / static_cast<double>(n);
      }
      if (err < opt.marginal_tol) break;
    }
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      total += std::exp((f[i] + g[j] - cost(i, j)) / reg - 2.0 * log_n) * cost(i, j);
    }
  }
  TransportResult out;
  out.method = TransportMethod::Sinkhorn;
  out.n = static_cast<std::size_t>(n);
  out.reg = reg;
  out.w2 = std::sqrt(std::max(total, 0.0));
  out.caveat = "entropic plan cost; biased upward relative to the exact value";
  out.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TransportResult w2_empirical(const PointSet& a, const PointSet& b, TransportMethod method) {
  check_sizes(a, b);
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index n = a.cols();
  TransportResult out;
  out.method = method;
  out.n = static_cast<std::size_t>(n);
  switch (method) {
    case TransportMethod::Sinkhorn:
      return w2_sinkhorn(a, b);
    case TransportMethod::Quantile1D: {
      if (a.rows() != 1) throw DomainError("1d-quantile W2 requires d = 1");
      std::vector<double> x(a.data(), a.data() + n), y(b.data(), b.data() + n);
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      double s = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      out.w2 = std::sqrt(s / n);
      break;
    }
    case TransportMethod::ExactAssignment: {
      if (static_cast<std::size_t>(n) > kExactAssignmentCap) {
        throw SizeError("exact assignment capped at n=" + std::to_string(kExactAssignmentCap) +
                        "; use the sinkhorn method");
      }
      const Mat cost = squared_distances(a, b);
      const auto perm = solve_assignment(cost);
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += cost(i, perm[i]);
      out.w2 = std::sqrt(std::max(s, 0.0) / n);
      break;
    }
  }
  out.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double coupled_w2_upper(const PointSet& y_end, const PointSet& z_end) {
  check_sizes(y_end, z_end);
  return std::sqrt((y_end - z_end).colwise().squaredNorm().mean());
}

double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  if (std::max(m.rows(), m.cols()) <= 64) {
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
  }
  return std::sqrt(power_iteration_sym(m.transpose() * m, 1e-12, 100'000));
}

double symmetric_operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() <= 16) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
  }
  return power_iteration_sym(m, 1e-10, 100'000);
}

}  // namespace fmlab
