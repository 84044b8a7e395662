#include "mkd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "mkd/parallel.hpp"

namespace mkd {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_same_dim(Eigen::Index dx, Eigen::Index dy) {
  if (dx != dy)
    throw DimensionError("points have dimensions " + std::to_string(dx) +
                         " and " + std::to_string(dy));
}

}  // namespace

// ---------------------------------------------------------------------------
// Feature maps

RandomFourierFeatures::RandomFourierFeatures(Eigen::Index input_dim,
                                             Eigen::Index num_features,
                                             double lengthscale,
                                             std::uint64_t seed)
    : lengthscale_(lengthscale), seed_(seed) {
  if (input_dim < 1) throw DomainError("feature input dimension must be >= 1");
  if (num_features < 1) throw DomainError("feature count must be >= 1");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw DomainError("lengthscale must be positive and finite");
  frequencies_.resize(input_dim, num_features);
  phases_.resize(num_features);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < num_features; ++j)
    for (Eigen::Index a = 0; a < input_dim; ++a)
      frequencies_(a, j) = normal(rng) / lengthscale;
  std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
  for (Eigen::Index j = 0; j < num_features; ++j) phases_[j] = uniform(rng);
}

Eigen::Index feature_dim(const FeatureMap& phi) {
  return std::visit(
      overloaded{[](const IdentityFeatures& f) { return f.dim; },
                 [](const RandomFourierFeatures& f) { return f.num_features(); }},
      phi);
}

Eigen::Index feature_input_dim(const FeatureMap& phi) {
  return std::visit(
      overloaded{[](const IdentityFeatures& f) { return f.dim; },
                 [](const RandomFourierFeatures& f) { return f.input_dim(); }},
      phi);
}

void feature_eval(const FeatureMap& phi, Eigen::Ref<const Eigen::VectorXd> x,
                  Eigen::Ref<Eigen::VectorXd> out) {
  check_same_dim(x.size(), feature_input_dim(phi));
  if (out.size() != feature_dim(phi))
    throw DimensionError("output buffer has size " + std::to_string(out.size()) +
                         ", feature map produces " +
                         std::to_string(feature_dim(phi)));
  std::visit(overloaded{[&](const IdentityFeatures&) { out = x; },
                        [&](const RandomFourierFeatures& f) {
                          const double scale =
                              std::sqrt(2.0 / static_cast<double>(f.num_features()));
                          out.noalias() = f.frequencies().transpose() * x;
                          out = (out + f.phases()).array().cos() * scale;
                        }},
             phi);
}

Eigen::VectorXd feature_eval(const FeatureMap& phi,
                             Eigen::Ref<const Eigen::VectorXd> x) {
  Eigen::VectorXd out(feature_dim(phi));
  feature_eval(phi, x, out);
  return out;
}

// ---------------------------------------------------------------------------
// Base kernel evaluation

namespace {

double rbf_eval(const GaussianRbf& k, Eigen::Ref<const Eigen::VectorXd> x,
                Eigen::Ref<const Eigen::VectorXd> y) {
  check_same_dim(x.size(), y.size());
  const double s = (x - y).squaredNorm();
  return std::exp(-s / (2.0 * k.lengthscale * k.lengthscale));
}

double imq_eval(const InverseMultiquadric& k, Eigen::Ref<const Eigen::VectorXd> x,
                Eigen::Ref<const Eigen::VectorXd> y) {
  check_same_dim(x.size(), y.size());
  const double s = (x - y).squaredNorm();
  return std::pow(1.0 + s / (k.scale * k.scale), -k.exponent);
}

}  // namespace

double kernel_eval(const BaseKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                   Eigen::Ref<const Eigen::VectorXd> y) {
  return std::visit(
      overloaded{[&](const GaussianRbf& g) { return rbf_eval(g, x, y); },
                 [&](const InverseMultiquadric& g) { return imq_eval(g, x, y); },
                 [&](const FeatureKernel& g) {
                   return feature_eval(g.features, x)
                       .dot(feature_eval(g.features, y));
                 }},
      k);
}

double kernel_eval(const SmoothKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                   Eigen::Ref<const Eigen::VectorXd> y) {
  return std::visit(
      overloaded{[&](const GaussianRbf& g) { return rbf_eval(g, x, y); },
                 [&](const InverseMultiquadric& g) { return imq_eval(g, x, y); }},
      k);
}

BaseKernel to_base_kernel(const SmoothKernel& k) {
  return std::visit([](const auto& g) { return BaseKernel(g); }, k);
}

void validate_kernel(const BaseKernel& k) {
  std::visit(overloaded{[](const GaussianRbf& g) {
                          if (!(g.lengthscale > 0.0) || !std::isfinite(g.lengthscale))
                            throw DomainError("lengthscale must be positive and finite");
                        },
                        [](const InverseMultiquadric& g) {
                          if (!(g.scale > 0.0) || !std::isfinite(g.scale))
                            throw DomainError("scale must be positive and finite");
                          if (!(g.exponent > 0.0) || !(g.exponent < 1.0))
                            throw DomainError("exponent must lie in (0, 1)");
                        },
                        [](const FeatureKernel& g) {
                          if (feature_dim(g.features) < 1)
                            throw DomainError("feature map must have dimension >= 1");
                        }},
             k);
}

Eigen::MatrixXd gram(const BaseKernel& k, const Dataset& xs, const Dataset& ys) {
  check_same_dim(xs.cols(), ys.cols());
  Eigen::MatrixXd g(xs.rows(), ys.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < ys.rows(); ++j)
      g(i, j) = kernel_eval(k, xs.row(i), ys.row(j));
  return g;
}

Eigen::MatrixXd gram(const BaseKernel& k, const Dataset& xs) {
  const Eigen::Index n = xs.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = kernel_eval(k, xs.row(i), xs.row(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_eval(k, xs.row(i), xs.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

double median_heuristic_lengthscale(const Dataset& ds, std::size_t max_rows,
                                    std::uint64_t seed) {
  const Eigen::Index n = ds.rows();
  std::vector<Eigen::Index> idx;
  if (static_cast<std::size_t>(n) <= max_rows) {
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  } else {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    idx.reserve(max_rows);
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(idx), max_rows, rng);
  }
  const std::size_t m = idx.size();
  if (m < 2) return 1.0;

  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      dist.push_back((ds.row(idx[i]) - ds.row(idx[j])).norm());

  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid),
                   dist.end());
  double med = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower =
        *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (lower + med);
  }
  return med > 0.0 ? med : 1.0;
}

// ---------------------------------------------------------------------------
// Embedded kernel

EmbeddedKernel::EmbeddedKernel(BaseKernel base, Dataset reference)
    : base_(std::move(base)), reference_(std::move(reference)) {
  validate_kernel(base_);
  const Eigen::Index m = reference_.rows();
  KahanSum acc;
  for (Eigen::Index i = 0; i < m; ++i) {
    acc.add(kernel_eval(base_, reference_.row(i), reference_.row(i)));
    for (Eigen::Index j = i + 1; j < m; ++j)
      acc.add(2.0 * kernel_eval(base_, reference_.row(i), reference_.row(j)));
  }
  ref_mean_ = acc.value() / (static_cast<double>(m) * static_cast<double>(m));
}

double EmbeddedKernel::eval(Eigen::Ref<const Eigen::VectorXd> x,
                            Eigen::Ref<const Eigen::VectorXd> y) const {
  check_same_dim(x.size(), reference_.cols());
  check_same_dim(y.size(), reference_.cols());
  const Eigen::Index m = reference_.rows();
  KahanSum to_y, to_x;
  for (Eigen::Index j = 0; j < m; ++j) {
    to_y.add(kernel_eval(base_, reference_.row(j), y));
    to_x.add(kernel_eval(base_, x, reference_.row(j)));
  }
  const double dm = static_cast<double>(m);
  return kernel_eval(base_, x, y) - to_y.value() / dm - to_x.value() / dm +
         ref_mean_;
}

double embedded_eval(const EmbeddedKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                     Eigen::Ref<const Eigen::VectorXd> y) {
  return k.eval(x, y);
}

// ---------------------------------------------------------------------------
// Smooth kernel derivatives

void eval_with_derivatives(const SmoothKernel& k,
                           Eigen::Ref<const Eigen::VectorXd> x,
                           Eigen::Ref<const Eigen::VectorXd> y,
                           SmoothKernelDerivatives& out) {
  check_same_dim(x.size(), y.size());
  const Eigen::Index d = x.size();
  if (out.grad_x.size() != d) out.resize(d);
  std::visit(
      overloaded{
          [&](const GaussianRbf& g) {
            const double l2 = g.lengthscale * g.lengthscale;
            out.grad_y = x - y;
            const double s = out.grad_y.squaredNorm();
            // Same expression as the plain evaluation, so the two agree
            // bit for bit.
            const double c =
                std::exp(-s / (2.0 * g.lengthscale * g.lengthscale));
            out.value = c;
            out.grad_y *= c / l2;
            out.grad_x = -out.grad_y;
            out.div_xy = (static_cast<double>(d) / l2 - s / (l2 * l2)) * c;
          },
          [&](const InverseMultiquadric& g) {
            const double g2 = g.scale * g.scale;
            const double b = g.exponent;
            out.grad_y = x - y;
            const double s = out.grad_y.squaredNorm();
            const double u = 1.0 + s / g2;
            const double c = std::pow(u, -b);  // matches the plain evaluation
            const double u_b1 = c / u;         // u^(-b-1)
            const double u_b2 = u_b1 / u;      // u^(-b-2)
            out.value = c;
            out.grad_y *= 2.0 * b / g2 * u_b1;
            out.grad_x = -out.grad_y;
            out.div_xy = 2.0 * b * static_cast<double>(d) / g2 * u_b1 -
                         4.0 * b * (b + 1.0) / (g2 * g2) * s * u_b2;
          }},
      k);
}

// ---------------------------------------------------------------------------
// Score-based kernel

SteinKernel::SteinKernel(SmoothKernel base, Eigen::Index data_dim, ScoreFunction score)
    : base_(std::move(base)), data_dim_(data_dim), score_(std::move(score)) {
  validate_kernel(to_base_kernel(base_));
  if (data_dim_ < 1) throw DomainError("data dimension must be >= 1");
  if (!score_) throw DomainError("score function must be callable");
}

SteinKernel SteinKernel::for_exponential_family(SmoothKernel base,
                                                ExponentialFamily fam) {
  auto fam_ptr = std::make_shared<ExponentialFamily>(std::move(fam));
  SteinKernel k(std::move(base), fam_ptr->data_dim,
                [fam_ptr](Eigen::Ref<const Eigen::VectorXd> x, const ParamVector& th) {
                  return expfam_score(*fam_ptr, x, th);
                });
  k.family_ = *fam_ptr;
  return k;
}

Eigen::VectorXd SteinKernel::score(Eigen::Ref<const Eigen::VectorXd> x,
                                   const ParamVector& theta) const {
  check_same_dim(x.size(), data_dim_);
  Eigen::VectorXd s = score_(x, theta);
  if (s.size() != data_dim_)
    throw ScoreError("score has dimension " + std::to_string(s.size()) +
                     ", expected " + std::to_string(data_dim_));
  if (!s.allFinite()) throw ScoreError("score is not finite");
  return s;
}

double SteinKernel::eval(Eigen::Ref<const Eigen::VectorXd> x,
                         Eigen::Ref<const Eigen::VectorXd> y,
                         const ParamVector& theta) const {
  const Eigen::VectorXd sx = score(x, theta);
  const Eigen::VectorXd sy = score(y, theta);
  SmoothKernelDerivatives c;
  eval_with_derivatives(base_, x, y, c);
  return c.div_xy + sx.dot(c.grad_y) + sy.dot(c.grad_x) + sx.dot(sy) * c.value;
}

Eigen::VectorXd SteinKernel::dtheta(Eigen::Ref<const Eigen::VectorXd> x,
                                    Eigen::Ref<const Eigen::VectorXd> y,
                                    const ParamVector& theta) const {
  if (!family_)
    throw ModelKindError("parameter derivatives need an exponential-family model");
  const ExponentialFamily& fam = *family_;
  check_same_dim(x.size(), data_dim_);
  check_same_dim(y.size(), data_dim_);
  const Eigen::MatrixXd tx = fam.grad_t(x);
  const Eigen::MatrixXd ty = fam.grad_t(y);
  const Eigen::VectorXd sx = expfam_score(fam, x, theta);
  const Eigen::VectorXd sy = expfam_score(fam, y, theta);
  SmoothKernelDerivatives c;
  eval_with_derivatives(base_, x, y, c);
  return ty.transpose() * c.grad_x + tx.transpose() * c.grad_y +
         c.value * (tx.transpose() * sy) + c.value * (ty.transpose() * sx);
}

Eigen::MatrixXd SteinKernel::d2theta(Eigen::Ref<const Eigen::VectorXd> x,
                                     Eigen::Ref<const Eigen::VectorXd> y) const {
  if (!family_)
    throw ModelKindError("parameter derivatives need an exponential-family model");
  const ExponentialFamily& fam = *family_;
  check_same_dim(x.size(), data_dim_);
  check_same_dim(y.size(), data_dim_);
  const Eigen::MatrixXd tx = fam.grad_t(x);
  const Eigen::MatrixXd ty = fam.grad_t(y);
  SmoothKernelDerivatives c;
  eval_with_derivatives(base_, x, y, c);
  const Eigen::MatrixXd cross = tx.transpose() * ty;
  return c.value * (cross + cross.transpose());
}

double stein_eval(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                  Eigen::Ref<const Eigen::VectorXd> y, const ParamVector& theta) {
  return k.eval(x, y, theta);
}

Eigen::VectorXd stein_dtheta(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                             Eigen::Ref<const Eigen::VectorXd> y,
                             const ParamVector& theta) {
  return k.dtheta(x, y, theta);
}

Eigen::MatrixXd stein_d2theta(const SteinKernel& k, Eigen::Ref<const Eigen::VectorXd> x,
                              Eigen::Ref<const Eigen::VectorXd> y) {
  return k.d2theta(x, y);
}

}  // namespace mkd
