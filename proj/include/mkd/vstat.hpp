#pragma once

#include <functional>

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/errors.hpp"

namespace mkd {

/// Which empirical double-sum normalization to use: V keeps the diagonal
/// and divides by n^2, U drops it and divides by n(n-1).
enum class EstimatorKind { V, U };

/// Symmetric bivariate summand v(x, y) = v(y, x); the engine evaluates each
/// unordered pair once and relies on the caller supplying a symmetric form.
using ScalarBivariate = std::function<double(Eigen::Ref<const Eigen::VectorXd>,
                                             Eigen::Ref<const Eigen::VectorXd>)>;

/// Vector/matrix summands write into a caller-shaped buffer.
using VectorBivariate =
    std::function<void(Eigen::Ref<const Eigen::VectorXd>,
                       Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::VectorXd>)>;
using MatrixBivariate =
    std::function<void(Eigen::Ref<const Eigen::VectorXd>,
                       Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::MatrixXd>)>;

/// (1/n^2) sum_{i,j} v(x_i, x_j). Compensated accumulation throughout;
/// deterministic for any thread count (fixed block partition and merge order).
double v_statistic(const Dataset& xs, const ScalarBivariate& v);

/// (1/(n(n-1))) sum_{i != j} v(x_i, x_j). ShapeError if n < 2.
double u_statistic(const Dataset& xs, const ScalarBivariate& v);

/// Sample variance (divisor n-1) of the per-row means
/// g_i = (1/n) sum_j v(x_i, x_j). ShapeError if n < 2.
double conditional_mean_variance(const Dataset& xs, const ScalarBivariate& v);

/// Componentwise V-statistic of a vector summand of size p.
Eigen::VectorXd v_statistic_vector(const Dataset& xs, Eigen::Index p,
                                   const VectorBivariate& v);

/// Componentwise V-statistic of an r x c matrix summand.
Eigen::MatrixXd v_statistic_matrix(const Dataset& xs, Eigen::Index r, Eigen::Index c,
                                   const MatrixBivariate& v);

}  // namespace mkd
