#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/errors.hpp"

namespace mkd {

/// Parameter vectors live in Eigen space; the box below carries the domain.
using ParamVector = Eigen::VectorXd;

/// Axis-aligned box constraint for parameters.
struct ThetaBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  /// Effectively unconstrained box [-1e10, 1e10]^p.
  static ThetaBox unbounded(Eigen::Index p);

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const ParamVector& theta) const;
  ParamVector project(const ParamVector& theta) const;
};

/// Unnormalized exponential family on R^d with densities
/// p_theta(x) proportional to exp(t(x) . theta + b(x)).
/// The score is grad_x log p_theta = grad_t(x) theta + grad_b(x), where
/// grad_t(x) is d x p with entry (a, j) = d t_j / d x_a.
struct ExponentialFamily {
  Eigen::Index data_dim = 0;
  Eigen::Index param_dim = 0;
  std::function<Eigen::VectorXd(Eigen::Ref<const Eigen::VectorXd>)> t;
  std::function<Eigen::MatrixXd(Eigen::Ref<const Eigen::VectorXd>)> grad_t;
  std::function<double(Eigen::Ref<const Eigen::VectorXd>)> b;
  std::function<Eigen::VectorXd(Eigen::Ref<const Eigen::VectorXd>)> grad_b;
  ThetaBox domain;
  /// Exact sampler for members that have one; empty otherwise.
  std::function<Dataset(const ParamVector&, Eigen::Index, std::uint64_t)> sampler;
};

/// Score of the family at x: grad_t(x) * theta + grad_b(x).
/// Throws DimensionError on size mismatch, ScoreError on non-finite output.
Eigen::VectorXd expfam_score(const ExponentialFamily& fam,
                             Eigen::Ref<const Eigen::VectorXd> x,
                             const ParamVector& theta);

/// Gaussian with unknown mean and unknown variance, per coordinate, in
/// natural form: t(x) = (x_1..x_d, -x_1^2/2..-x_d^2/2), b = 0, p = 2d.
/// theta = (mu/sigma^2, 1/sigma^2) coordinatewise; the sampler needs every
/// precision component positive.
ExponentialFamily gaussian_location_scale_instance(Eigen::Index d);

/// Gaussian with unknown mean and unit variance: t(x) = x,
/// b(x) = -|x|^2/2, p = d, score = theta - x; sampler draws N(theta, I).
ExponentialFamily gaussian_location_instance(Eigen::Index d);

/// Natural parameters (mu/sigma^2, 1/sigma^2) from moments, coordinatewise.
ParamVector gaussian_natural_from_moments(Eigen::Ref<const Eigen::VectorXd> mean,
                                          Eigen::Ref<const Eigen::VectorXd> variance);

/// Inverse map; throws DomainError when a precision component is <= 0.
void gaussian_moments_from_natural(const ParamVector& theta,
                                   Eigen::VectorXd& mean,
                                   Eigen::VectorXd& variance);

enum class BaseLaw { StandardNormal, UniformUnit };

/// Simulator-defined model: theta is pushed through a deterministic
/// generator applied to base draws. Sampling uses common random numbers:
/// for a fixed seed the base draws are identical across theta, so
/// theta -> sample is deterministic and smooth in theta.
struct PushforwardModel {
  Eigen::Index data_dim = 0;
  Eigen::Index latent_dim = 0;
  Eigen::Index param_dim = 0;
  BaseLaw base = BaseLaw::StandardNormal;
  /// Maps (theta, latent draw) to one observation.
  std::function<Eigen::VectorXd(const ParamVector&, Eigen::Ref<const Eigen::VectorXd>)>
      generator;
  ThetaBox domain;
};

/// Draws m samples from the pushforward at theta. Base draws come first
/// (row-major order from mt19937_64(seed)), then the generator is applied,
/// so the same seed reuses the same latent variables for every theta.
Dataset pushforward_sample(const PushforwardModel& model, const ParamVector& theta,
                           Eigen::Index m, std::uint64_t seed);

/// Location model x = theta + z, z ~ N(0, I_d).
PushforwardModel location_pushforward_instance(Eigen::Index d);

}  // namespace mkd
