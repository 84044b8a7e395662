#pragma once

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/kernels.hpp"
#include "mkd/models.hpp"

namespace mkd::detail {

/// The three V-statistics that define the exponential-family score-kernel
/// objective as the exact quadratic c0 + 2 beta.theta + theta.Gamma.theta:
///   gamma = V-stat of c(x,y) grad_t(x)^T grad_t(y), symmetrized;
///   beta  = V-stat of the theta-free half of the parameter gradient;
///   c0    = V-stat of the theta-free part of the kernel.
struct QuadraticTerms {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd beta;
  double c0 = 0.0;
};

/// One fused pass over all unordered pairs. Set want_linear_terms = false
/// to fill only gamma (beta/c0 left empty). Deterministic for any thread
/// count; compensated accumulation across row blocks.
QuadraticTerms assemble_quadratic(const SmoothKernel& c, const ExponentialFamily& fam,
                                  const Dataset& xs, bool want_linear_terms = true);

/// Row means g_i = (1/n) sum_j dk/dtheta (x_i, x_j) at theta, as an n x p
/// matrix. Each row is an independent full pass (thread-safe, deterministic).
Eigen::MatrixXd dtheta_row_means(const SmoothKernel& c, const ExponentialFamily& fam,
                                 const Dataset& xs, const ParamVector& theta);

}  // namespace mkd::detail
