#pragma once

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/errors.hpp"
#include "mkd/kernels.hpp"
#include "mkd/vstat.hpp"

namespace mkd {

/// A squared discrepancy plus its square root. `squared` may carry a tiny
/// negative rounding residual (>= -1e-10 * kernel diagonal scale); `value`
/// clamps at zero before the square root.
struct DiscrepancyValue {
  double squared = 0.0;
  double value = 0.0;
  EstimatorKind kind = EstimatorKind::V;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
};

/// Squared maximum mean discrepancy between the empirical measures of xs
/// and ys:
///   V: (1/n^2) sum k(x,x') - (2/nm) sum k(x,y) + (1/m^2) sum k(y,y')
///   U: same with off-diagonal-only self terms and 1/(n(n-1)) weights.
/// Symmetric in (xs, ys) bit-for-bit: the cross sum runs in a canonical
/// order independent of argument position.
/// Throws DimensionError on dimension mismatch, ShapeError for U with a
/// sample of fewer than two rows.
DiscrepancyValue mmd_squared(const BaseKernel& kernel, const Dataset& xs,
                             const Dataset& ys,
                             EstimatorKind kind = EstimatorKind::V);

/// || (1/n) sum phi(x_i) - model_moments ||^2, the squared discrepancy of
/// the moment-matching pathway under the identified parametrization.
double gmm_discrepancy_squared(const FeatureMap& phi, const Dataset& xs,
                               const Eigen::VectorXd& model_moments);

/// V- or U-statistic of the score-based kernel at theta over xs. Scores are
/// evaluated once per row. The V form is nonnegative up to rounding; the U
/// form may be negative.
DiscrepancyValue ksd_squared(const SteinKernel& kernel, const Dataset& xs,
                             const ParamVector& theta,
                             EstimatorKind kind = EstimatorKind::V);

/// Repeated-evaluation form of the V-kind squared discrepancy against a
/// fixed first sample: the xs self-term is computed once at construction,
/// so each call pays only the ys self-term and the cross term. Agrees with
/// mmd_squared(kernel, xs, ys, V) bit-for-bit.
class MmdObjective {
 public:
  MmdObjective(BaseKernel kernel, Dataset xs);

  double operator()(const Dataset& ys) const;

  const Dataset& x_samples() const { return xs_; }

 private:
  BaseKernel kernel_;
  Dataset xs_;
  SampleMatrix transformed_;  // xs through the feature map, if any
  double self_x_ = 0.0;       // xs self-sum already divided by n^2
};

/// The unit-norm RKHS function attaining the mean-embedding gap between
/// two empirical measures: f = [mu(P_n) - mu(Q_m)] / D, D the V-kind
/// discrepancy. Construction throws DegenerateError when D <= 1e-12.
class WitnessFunction {
 public:
  WitnessFunction(BaseKernel kernel, Dataset xs, Dataset ys);

  /// [(1/n) sum k(x_i, z) - (1/m) sum k(y_j, z)] / normalizer.
  double eval(Eigen::Ref<const Eigen::VectorXd> z) const;

  double normalizer() const { return normalizer_; }
  const Dataset& x_samples() const { return xs_; }
  const Dataset& y_samples() const { return ys_; }
  const BaseKernel& kernel() const { return kernel_; }

 private:
  BaseKernel kernel_;
  Dataset xs_;
  Dataset ys_;
  double normalizer_ = 0.0;
};

double witness_eval(const WitnessFunction& w, Eigen::Ref<const Eigen::VectorXd> z);

}  // namespace mkd
