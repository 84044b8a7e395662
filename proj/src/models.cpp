#include "mkd/models.hpp"

#include <cmath>
#include <random>

namespace mkd {

ThetaBox ThetaBox::unbounded(Eigen::Index p) {
  ThetaBox box;
  box.lo = Eigen::VectorXd::Constant(p, -1e10);
  box.hi = Eigen::VectorXd::Constant(p, 1e10);
  return box;
}

bool ThetaBox::contains(const ParamVector& theta) const {
  if (theta.size() != lo.size())
    throw DimensionError("parameter has dimension " + std::to_string(theta.size()) +
                         ", box has " + std::to_string(lo.size()));
  return (theta.array() >= lo.array()).all() && (theta.array() <= hi.array()).all();
}

ParamVector ThetaBox::project(const ParamVector& theta) const {
  if (theta.size() != lo.size())
    throw DimensionError("parameter has dimension " + std::to_string(theta.size()) +
                         ", box has " + std::to_string(lo.size()));
  return theta.cwiseMax(lo).cwiseMin(hi);
}

Eigen::VectorXd expfam_score(const ExponentialFamily& fam,
                             Eigen::Ref<const Eigen::VectorXd> x,
                             const ParamVector& theta) {
  if (x.size() != fam.data_dim)
    throw DimensionError("point has dimension " + std::to_string(x.size()) +
                         ", family expects " + std::to_string(fam.data_dim));
  if (theta.size() != fam.param_dim)
    throw DimensionError("parameter has dimension " + std::to_string(theta.size()) +
                         ", family expects " + std::to_string(fam.param_dim));
  Eigen::VectorXd s = fam.grad_t(x) * theta + fam.grad_b(x);
  if (!s.allFinite()) throw ScoreError("score is not finite");
  return s;
}

namespace {

Dataset sample_gaussian_rows(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd,
                             Eigen::Index m, std::uint64_t seed) {
  const Eigen::Index d = mean.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SampleMatrix out(m, d);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out(i, j) = mean[j] + sd[j] * normal(rng);
  return Dataset(std::move(out));
}

}  // namespace

ExponentialFamily gaussian_location_scale_instance(Eigen::Index d) {
  if (d < 1) throw DomainError("dimension must be >= 1");
  ExponentialFamily fam;
  fam.data_dim = d;
  fam.param_dim = 2 * d;
  fam.t = [d](Eigen::Ref<const Eigen::VectorXd> x) {
    Eigen::VectorXd out(2 * d);
    out.head(d) = x;
    out.tail(d) = -0.5 * x.array().square();
    return out;
  };
  fam.grad_t = [d](Eigen::Ref<const Eigen::VectorXd> x) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, 2 * d);
    g.leftCols(d).setIdentity();
    g.rightCols(d).diagonal() = -x;
    return g;
  };
  fam.b = [](Eigen::Ref<const Eigen::VectorXd>) { return 0.0; };
  fam.grad_b = [d](Eigen::Ref<const Eigen::VectorXd>) {
    return Eigen::VectorXd::Zero(d).eval();
  };
  fam.domain = ThetaBox::unbounded(2 * d);
  fam.domain.lo.tail(d).setConstant(1e-10);  // sampler needs positive precision
  fam.sampler = [d](const ParamVector& theta, Eigen::Index m, std::uint64_t seed) {
    Eigen::VectorXd mean, variance;
    gaussian_moments_from_natural(theta, mean, variance);
    return sample_gaussian_rows(mean, variance.cwiseSqrt(), m, seed);
  };
  return fam;
}

ExponentialFamily gaussian_location_instance(Eigen::Index d) {
  if (d < 1) throw DomainError("dimension must be >= 1");
  ExponentialFamily fam;
  fam.data_dim = d;
  fam.param_dim = d;
  fam.t = [](Eigen::Ref<const Eigen::VectorXd> x) { return x.eval(); };
  fam.grad_t = [d](Eigen::Ref<const Eigen::VectorXd>) {
    return Eigen::MatrixXd::Identity(d, d).eval();
  };
  fam.b = [](Eigen::Ref<const Eigen::VectorXd> x) { return -0.5 * x.squaredNorm(); };
  fam.grad_b = [](Eigen::Ref<const Eigen::VectorXd> x) { return (-x).eval(); };
  fam.domain = ThetaBox::unbounded(d);
  fam.sampler = [d](const ParamVector& theta, Eigen::Index m, std::uint64_t seed) {
    return sample_gaussian_rows(theta, Eigen::VectorXd::Ones(d), m, seed);
  };
  return fam;
}

ParamVector gaussian_natural_from_moments(Eigen::Ref<const Eigen::VectorXd> mean,
                                          Eigen::Ref<const Eigen::VectorXd> variance) {
  if (mean.size() != variance.size())
    throw DimensionError("mean and variance dimensions differ");
  if ((variance.array() <= 0.0).any())
    throw DomainError("variance components must be positive");
  const Eigen::Index d = mean.size();
  ParamVector theta(2 * d);
  theta.head(d) = mean.array() / variance.array();
  theta.tail(d) = variance.array().inverse();
  return theta;
}

void gaussian_moments_from_natural(const ParamVector& theta, Eigen::VectorXd& mean,
                                   Eigen::VectorXd& variance) {
  if (theta.size() % 2 != 0)
    throw DimensionError("natural parameter must have even dimension");
  const Eigen::Index d = theta.size() / 2;
  if ((theta.tail(d).array() <= 0.0).any())
    throw DomainError("precision components must be positive");
  variance = theta.tail(d).array().inverse();
  mean = theta.head(d).array() * variance.array();
}

Dataset pushforward_sample(const PushforwardModel& model, const ParamVector& theta,
                           Eigen::Index m, std::uint64_t seed) {
  if (theta.size() != model.param_dim)
    throw DimensionError("parameter has dimension " + std::to_string(theta.size()) +
                         ", model expects " + std::to_string(model.param_dim));
  if (m < 1) throw DomainError("sample count must be >= 1");
  if (!model.domain.contains(theta))
    throw DomainError("parameter outside the model's box");

  // Common random numbers: all latent draws are generated before the
  // parameter touches anything, in fixed row-major order.
  SampleMatrix latent(m, model.latent_dim);
  std::mt19937_64 rng(seed);
  if (model.base == BaseLaw::StandardNormal) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < model.latent_dim; ++j) latent(i, j) = dist(rng);
  } else {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < model.latent_dim; ++j) latent(i, j) = dist(rng);
  }

  SampleMatrix out(m, model.data_dim);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::VectorXd y = model.generator(theta, latent.row(i).transpose());
    if (y.size() != model.data_dim)
      throw DimensionError("generator produced dimension " + std::to_string(y.size()) +
                           ", model declares " + std::to_string(model.data_dim));
    out.row(i) = y.transpose();
  }
  return Dataset(std::move(out));
}

PushforwardModel location_pushforward_instance(Eigen::Index d) {
  if (d < 1) throw DomainError("dimension must be >= 1");
  PushforwardModel model;
  model.data_dim = d;
  model.latent_dim = d;
  model.param_dim = d;
  model.base = BaseLaw::StandardNormal;
  model.generator = [](const ParamVector& theta,
                       Eigen::Ref<const Eigen::VectorXd> z) {
    return (theta + z).eval();
  };
  model.domain = ThetaBox::unbounded(d);
  return model;
}

}  // namespace mkd
