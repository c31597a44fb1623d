// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fmlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A set of n points in R^d stored as columns of a d x n matrix.
using PointSet = Eigen::MatrixXd;

}  // namespace fmlab
