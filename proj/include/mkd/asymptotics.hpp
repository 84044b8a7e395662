#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/errors.hpp"
#include "mkd/kernels.hpp"
#include "mkd/models.hpp"

namespace mkd {

/// Curvature matrix of the squared discrepancy at theta: one half of the
/// V-statistic of the parameter Hessian of the kernel. The Hessian is
/// constant in theta for both pairings, so `theta` is only checked for
/// size; for feature-map discrepancies the result is the identity.
Eigen::MatrixXd gamma_hat(const FeatureMap& phi, const Dataset& xs,
                          const ParamVector& theta);
Eigen::MatrixXd gamma_hat(const SmoothKernel& c, const ExponentialFamily& model,
                          const Dataset& xs, const ParamVector& theta);

/// Covariance (divisor n-1) of the per-row conditional gradient
/// g_i = mean_j dtheta k(x_i, x_j; theta).
Eigen::MatrixXd sigma_hat(const FeatureMap& phi, const Dataset& xs,
                          const ParamVector& theta);
Eigen::MatrixXd sigma_hat(const SmoothKernel& c, const ExponentialFamily& model,
                          const Dataset& xs, const ParamVector& theta);

/// gamma^{-1} sigma gamma^{-T}, symmetrized. Throws SingularError when gamma is
/// numerically singular.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& sigma);

struct AsymptoticCovariance {
  Eigen::MatrixXd gamma_n;
  Eigen::MatrixXd sigma_n;
  Eigen::MatrixXd sandwich;  // gamma^{-1} sigma gamma^{-T}
  double gamma_min_eig = 0.0;
};

AsymptoticCovariance asymptotic_covariance(const FeatureMap& phi, const Dataset& xs,
                                           const ParamVector& theta);
AsymptoticCovariance asymptotic_covariance(const SmoothKernel& c,
                                           const ExponentialFamily& model,
                                           const Dataset& xs,
                                           const ParamVector& theta);

/// CDF of the chi-square distribution with p degrees of freedom.
double chi2_cdf(int p, double x);

/// Quantile (inverse CDF) of the chi-square distribution with p degrees of
/// freedom at probability gamma in (0, 1).
double chi2_quantile(int p, double gamma);

double standard_normal_cdf(double z);

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and the
/// standard normal CDF.
double ks_distance_to_standard_normal(const std::vector<double>& values);

/// Ellipsoidal confidence set
///   { theta : n * || sigma^{-1/2} gamma (theta - center) ||^2 <= chi2_p(level) }.
class ConfidenceSet {
 public:
  ConfidenceSet(const ParamVector& center, const AsymptoticCovariance& cov,
                Eigen::Index sample_size, double level);

  bool contains(const ParamVector& theta) const;

  /// sqrt(n) * sigma^{-1/2} gamma (theta - center); approximately standard
  /// normal at the true parameter.
  ParamVector standardized(const ParamVector& theta) const;

  const AsymptoticCovariance& covariance() const { return cov_; }
  const ParamVector& center() const { return center_; }
  const Eigen::MatrixXd& shape() const { return shape_; }
  double level() const { return level_; }
  double threshold() const { return threshold_; }
  Eigen::Index sample_size() const { return n_; }
  bool floored() const { return floored_; }

 private:
  AsymptoticCovariance cov_;
  ParamVector center_;
  Eigen::MatrixXd shape_;  // sigma^{-1/2} gamma
  Eigen::Index n_;
  double level_;
  double threshold_;
  bool floored_ = false;
};

ConfidenceSet confidence_set(const ParamVector& theta_n,
                             const AsymptoticCovariance& cov,
                             Eigen::Index sample_size, double gamma);

struct CoverageConfig {
  std::string scenario;  // "gmm-gaussian-mean" or "ksd-gaussian-natparams"
  Eigen::Index n = 2000;
  int replicates = 500;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  Eigen::Index dim = 1;
  ParamVector theta_star;     // empty -> scenario default
  double lengthscale = 1.0;   // kernel lengthscale for the ksd scenario
};

struct ReplicateOutcome {
  ParamVector theta_n;
  bool covered = false;
  ParamVector residual;
};

struct CoverageReport {
  std::string scenario;
  Eigen::Index n = 0;
  int replicates = 0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  ParamVector theta_star;
  double coverage = 0.0;
  ParamVector mean_theta;
  double ks_distance = 0.0;
  bool variance_caution = false;
  std::vector<ReplicateOutcome> per_replicate;
};

/// Repeatedly draws data at theta_star, estimates, and checks whether the
/// confidence set covers the truth. Replicate r uses seed + r.
CoverageReport coverage_simulation(const CoverageConfig& config);

}  // namespace mkd
