#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/errors.hpp"
#include "mkd/models.hpp"

namespace mkd {

// ---------------------------------------------------------------------------
// Base kernels

/// exp(-|x - y|^2 / (2 l^2)), l > 0.
struct GaussianRbf {
  double lengthscale = 1.0;
};

/// (1 + |x - y|^2 / g^2)^(-b), g > 0, b in (0, 1).
struct InverseMultiquadric {
  double scale = 1.0;
  double exponent = 0.5;
};

/// Identity feature map phi(x) = x; feature dimension equals data dimension.
struct IdentityFeatures {
  Eigen::Index dim = 0;
};

/// Random Fourier features approximating an RBF kernel:
/// phi_j(x) = sqrt(2/p) cos(<w_j, x> + b_j), w_j ~ N(0, l^-2 I),
/// b_j ~ U[0, 2pi). Frequencies and phases are fixed at construction from
/// the seed, so the map is a deterministic function afterwards.
class RandomFourierFeatures {
 public:
  RandomFourierFeatures(Eigen::Index input_dim, Eigen::Index num_features,
                        double lengthscale, std::uint64_t seed);

  Eigen::Index input_dim() const { return frequencies_.rows(); }
  Eigen::Index num_features() const { return frequencies_.cols(); }
  double lengthscale() const { return lengthscale_; }
  std::uint64_t seed() const { return seed_; }

  const Eigen::MatrixXd& frequencies() const { return frequencies_; }
  const Eigen::VectorXd& phases() const { return phases_; }

 private:
  Eigen::MatrixXd frequencies_;  // d x p
  Eigen::VectorXd phases_;       // p
  double lengthscale_ = 1.0;
  std::uint64_t seed_ = 0;
};

using FeatureMap = std::variant<IdentityFeatures, RandomFourierFeatures>;

Eigen::Index feature_dim(const FeatureMap& phi);
Eigen::Index feature_input_dim(const FeatureMap& phi);

/// phi(x), written into out (size feature_dim).
void feature_eval(const FeatureMap& phi, Eigen::Ref<const Eigen::VectorXd> x,
                  Eigen::Ref<Eigen::VectorXd> out);
Eigen::VectorXd feature_eval(const FeatureMap& phi,
                             Eigen::Ref<const Eigen::VectorXd> x);

/// Finite-dimensional kernel k(x, y) = <phi(x), phi(y)>.
struct FeatureKernel {
  FeatureMap features;
};

/// Kernels with closed-form first and mixed second derivatives, the ones a
/// score-based kernel can be built on.
using SmoothKernel = std::variant<GaussianRbf, InverseMultiquadric>;

/// Any positive-definite kernel this library evaluates directly.
using BaseKernel = std::variant<GaussianRbf, InverseMultiquadric, FeatureKernel>;

double kernel_eval(const BaseKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                   Eigen::Ref<const Eigen::VectorXd> y);
double kernel_eval(const SmoothKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                   Eigen::Ref<const Eigen::VectorXd> y);

BaseKernel to_base_kernel(const SmoothKernel& k);

/// Validates kernel parameters (positivity, exponent range).
void validate_kernel(const BaseKernel& k);

/// Gram matrix G(i, j) = k(xs_i, ys_j). DimensionError on column mismatch.
Eigen::MatrixXd gram(const BaseKernel& k, const Dataset& xs, const Dataset& ys);
/// Symmetric Gram of one sample; exactly symmetric by construction.
Eigen::MatrixXd gram(const BaseKernel& k, const Dataset& xs);

/// Median of pairwise Euclidean distances over a seeded subsample of at
/// most max_rows rows (without replacement). Falls back to 1.0 when the
/// median distance is zero.
double median_heuristic_lengthscale(const Dataset& ds, std::size_t max_rows = 1000,
                                    std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Embedded kernel: recenters a base kernel at the empirical measure of a
// reference sample, k_Q(x,y) = k(x,y) - mean_j k(z_j,y) - mean_j k(x,z_j)
// + mean_jl k(z_j,z_l). The squared discrepancy to Q is the double average
// of k_Q over the other sample.

class EmbeddedKernel {
 public:
  EmbeddedKernel(BaseKernel base, Dataset reference);

  double eval(Eigen::Ref<const Eigen::VectorXd> x,
              Eigen::Ref<const Eigen::VectorXd> y) const;

  const BaseKernel& base() const { return base_; }
  const Dataset& reference() const { return reference_; }
  double reference_mean() const { return ref_mean_; }

 private:
  BaseKernel base_;
  Dataset reference_;
  double ref_mean_ = 0.0;  // double average of base kernel over reference
};

double embedded_eval(const EmbeddedKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                     Eigen::Ref<const Eigen::VectorXd> y);

// ---------------------------------------------------------------------------
// Score-based kernel. With c a smooth base kernel and s the model score,
//   k(x,y;theta) = div_x div_y c + <s(x), grad_y c> + <s(y), grad_x c>
//                + <s(x), s(y)> c(x,y),
// which has zero mean under the model for each fixed argument.

/// Value and first derivatives of a smooth base kernel at one pair.
struct SmoothKernelDerivatives {
  double value = 0.0;
  double div_xy = 0.0;       // sum_a d^2 c / dx_a dy_a
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_y;

  void resize(Eigen::Index d) {
    grad_x.resize(d);
    grad_y.resize(d);
  }
};

/// Fills out with c(x,y), grad_x c, grad_y c and the mixed divergence.
void eval_with_derivatives(const SmoothKernel& k,
                           Eigen::Ref<const Eigen::VectorXd> x,
                           Eigen::Ref<const Eigen::VectorXd> y,
                           SmoothKernelDerivatives& out);

using ScoreFunction =
    std::function<Eigen::VectorXd(Eigen::Ref<const Eigen::VectorXd>, const ParamVector&)>;

class SteinKernel {
 public:
  /// Built from a bare score function; parameter derivatives unavailable.
  SteinKernel(SmoothKernel base, Eigen::Index data_dim, ScoreFunction score);

  /// Built from an exponential family; enables dtheta/d2theta, which use
  /// score(x) = grad_t(x) theta + grad_b(x).
  static SteinKernel for_exponential_family(SmoothKernel base, ExponentialFamily fam);

  double eval(Eigen::Ref<const Eigen::VectorXd> x,
              Eigen::Ref<const Eigen::VectorXd> y, const ParamVector& theta) const;

  /// Gradient in theta; linear in theta. ModelKindError without a family.
  Eigen::VectorXd dtheta(Eigen::Ref<const Eigen::VectorXd> x,
                         Eigen::Ref<const Eigen::VectorXd> y,
                         const ParamVector& theta) const;

  /// Hessian in theta: c(x,y) (grad_t(x)^T grad_t(y) + grad_t(y)^T grad_t(x)).
  /// Constant in theta, symmetric, and invariant under swapping x and y.
  Eigen::MatrixXd d2theta(Eigen::Ref<const Eigen::VectorXd> x,
                          Eigen::Ref<const Eigen::VectorXd> y) const;

  Eigen::VectorXd score(Eigen::Ref<const Eigen::VectorXd> x,
                        const ParamVector& theta) const;

  const SmoothKernel& base() const { return base_; }
  Eigen::Index data_dim() const { return data_dim_; }
  const std::optional<ExponentialFamily>& exponential_family() const {
    return family_;
  }

 private:
  SmoothKernel base_;
  Eigen::Index data_dim_ = 0;
  ScoreFunction score_;
  std::optional<ExponentialFamily> family_;
};

double stein_eval(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                  Eigen::Ref<const Eigen::VectorXd> y, const ParamVector& theta);
Eigen::VectorXd stein_dtheta(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                             Eigen::Ref<const Eigen::VectorXd> y,
                             const ParamVector& theta);
Eigen::MatrixXd stein_d2theta(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                              Eigen::Ref<const Eigen::VectorXd> y);

}  // namespace mkd
