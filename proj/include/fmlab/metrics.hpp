// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fmlab/types.hpp"

namespace fmlab {

enum class TransportMethod { ExactAssignment, Sinkhorn, Quantile1D };

const char* to_string(TransportMethod m);

struct TransportResult {
  double w2 = 0.0;
  TransportMethod method = TransportMethod::ExactAssignment;
  std::size_t n = 0;
  double runtime_seconds = 0.0;
  /// Entropic regularisation (Sinkhorn only).
  double reg = 0.0;
  /// Sinkhorn plan cost is biased upward by the entropic term; flagged here.
  std::string caveat;
};

/// Largest problem accepted by the exact assignment solver.
inline constexpr std::size_t kExactAssignmentCap = 4096;

/// Empirical 2-Wasserstein distance between equal-size point sets (columns).
/// Throws DomainError on size mismatch, SizeError when the exact method is
/// asked for n > kExactAssignmentCap.
TransportResult w2_empirical(const PointSet& a, const PointSet& b,
                             TransportMethod method = TransportMethod::ExactAssignment);

/// Optimal assignment for a square cost matrix: result[row] = column.
/// Shortest augmenting path with potentials; O(n^3) worst case.
std::vector<int> solve_assignment(const Mat& cost);

struct SinkhornOptions {
  /// Regularisation as a fraction of the median pairwise cost.
  double reg_fraction = 0.01;
  int max_iterations = 10'000;
  double marginal_tol = 1e-9;
};

TransportResult w2_sinkhorn(const PointSet& a, const PointSet& b, const SinkhornOptions& opt = {});

/// sqrt(mean_i |y_i - z_i|^2) for index-aligned point sets.
double coupled_w2_upper(const PointSet& y_end, const PointSet& z_end);

/// Largest singular value. Exact SVD for d <= 64, power iteration on m^T m above.
double operator_norm(const Mat& m);

/// Largest |eigenvalue| of a symmetric matrix: full eigendecomposition for
/// d <= 16, power iteration (tolerance 1e-10) above.
double symmetric_operator_norm(const Mat& m);

}  // namespace fmlab
