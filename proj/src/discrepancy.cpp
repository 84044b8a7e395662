#include "mkd/discrepancy.hpp"

#include <cmath>
#include <cstring>
#include <variant>
#include <vector>

#include "mkd/parallel.hpp"

namespace mkd {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::size_t kRowBlock = 128;

// Raw-pointer kernel evaluators for the O(n^2) loops.

struct RbfFn {
  double inv_two_l2;
  Eigen::Index d;
  double operator()(const double* a, const double* b) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = a[k] - b[k];
      s += diff * diff;
    }
    return std::exp(-s * inv_two_l2);
  }
};

struct ImqFn {
  double inv_g2;
  double exponent;
  Eigen::Index d;
  double operator()(const double* a, const double* b) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = a[k] - b[k];
      s += diff * diff;
    }
    return std::pow(1.0 + s * inv_g2, -exponent);
  }
};

struct DotFn {
  Eigen::Index d;
  double operator()(const double* a, const double* b) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
  }
};

// sum over i<j of 2 f(row_i, row_j), plus the diagonal when include_diag.
template <class F>
double blocked_self_sum(const SampleMatrix& m, const F& f, bool include_diag) {
  const std::size_t n = static_cast<std::size_t>(m.rows());
  const Eigen::Index d = m.cols();
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanSum> partial(nblocks);
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanSum acc;
    for (std::size_t i = begin; i < end; ++i) {
      const double* ri = m.data() + static_cast<Eigen::Index>(i) * d;
      for (std::size_t j = 0; j < i; ++j)
        acc.add(2.0 * f(m.data() + static_cast<Eigen::Index>(j) * d, ri));
      if (include_diag) acc.add(f(ri, ri));
    }
    partial[b] = acc;
  });
  KahanSum total;
  for (const auto& p : partial) total.merge(p);
  return total.value();
}

// Full rectangle sum_{i,j} f(outer_i, inner_j), outer rows blocked.
template <class F>
double blocked_cross_sum(const SampleMatrix& outer, const SampleMatrix& inner,
                         const F& f) {
  const std::size_t n = static_cast<std::size_t>(outer.rows());
  const std::size_t m = static_cast<std::size_t>(inner.rows());
  const Eigen::Index d = outer.cols();
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanSum> partial(nblocks);
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanSum acc;
    for (std::size_t i = begin; i < end; ++i) {
      const double* ri = outer.data() + static_cast<Eigen::Index>(i) * d;
      for (std::size_t j = 0; j < m; ++j)
        acc.add(f(ri, inner.data() + static_cast<Eigen::Index>(j) * d));
    }
    partial[b] = acc;
  });
  KahanSum total;
  for (const auto& p : partial) total.merge(p);
  return total.value();
}

// Canonical argument order for the cross sum so that swapping the samples
// reproduces the identical addition sequence: more rows first, ties broken
// by raw byte order, equal content either way by symmetry.
bool first_is_canonical_outer(const SampleMatrix& a, const SampleMatrix& b) {
  if (a.rows() != b.rows()) return a.rows() > b.rows();
  const int cmp = std::memcmp(a.data(), b.data(),
                              sizeof(double) * static_cast<std::size_t>(a.size()));
  return cmp <= 0;
}

template <class F>
DiscrepancyValue mmd_impl(const SampleMatrix& x, const SampleMatrix& y, const F& f,
                          EstimatorKind kind) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  if (kind == EstimatorKind::U && (x.rows() < 2 || y.rows() < 2))
    throw ShapeError("off-diagonal estimator needs at least two rows per sample");

  const bool diag = kind == EstimatorKind::V;
  const double self_x =
      blocked_self_sum(x, f, diag) / (diag ? n * n : n * (n - 1.0));
  const double self_y =
      blocked_self_sum(y, f, diag) / (diag ? m * m : m * (m - 1.0));
  const double cross = (first_is_canonical_outer(x, y)
                            ? blocked_cross_sum(x, y, f)
                            : blocked_cross_sum(y, x, f)) /
                       (n * m);

  DiscrepancyValue out;
  out.squared = (self_x + self_y) - 2.0 * cross;
  out.value = std::sqrt(std::max(out.squared, 0.0));
  out.kind = kind;
  out.n = x.rows();
  out.m = y.rows();
  return out;
}

SampleMatrix feature_transform(const FeatureMap& phi, const Dataset& xs) {
  const Eigen::Index p = feature_dim(phi);
  SampleMatrix out(xs.rows(), p);
  Eigen::VectorXd buf(p);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    feature_eval(phi, xs.row(i), buf);
    out.row(i) = buf.transpose();
  }
  return out;
}

}  // namespace

DiscrepancyValue mmd_squared(const BaseKernel& kernel, const Dataset& xs,
                             const Dataset& ys, EstimatorKind kind) {
  validate_kernel(kernel);
  if (xs.cols() != ys.cols())
    throw DimensionError("samples have dimensions " + std::to_string(xs.cols()) +
                         " and " + std::to_string(ys.cols()));
  return std::visit(
      overloaded{
          [&](const GaussianRbf& k) {
            const RbfFn f{1.0 / (2.0 * k.lengthscale * k.lengthscale), xs.cols()};
            return mmd_impl(xs.samples(), ys.samples(), f, kind);
          },
          [&](const InverseMultiquadric& k) {
            const ImqFn f{1.0 / (k.scale * k.scale), k.exponent, xs.cols()};
            return mmd_impl(xs.samples(), ys.samples(), f, kind);
          },
          [&](const FeatureKernel& k) {
            if (xs.cols() != feature_input_dim(k.features))
              throw DimensionError("feature map expects dimension " +
                                   std::to_string(feature_input_dim(k.features)));
            const SampleMatrix fx = feature_transform(k.features, xs);
            const SampleMatrix fy = feature_transform(k.features, ys);
            const DotFn f{fx.cols()};
            return mmd_impl(fx, fy, f, kind);
          }},
      kernel);
}

double gmm_discrepancy_squared(const FeatureMap& phi, const Dataset& xs,
                               const Eigen::VectorXd& model_moments) {
  if (xs.cols() != feature_input_dim(phi))
    throw DimensionError("feature map expects dimension " +
                         std::to_string(feature_input_dim(phi)));
  const Eigen::Index p = feature_dim(phi);
  if (model_moments.size() != p)
    throw DimensionError("moment vector has size " +
                         std::to_string(model_moments.size()) + ", expected " +
                         std::to_string(p));
  KahanVector acc(p);
  Eigen::VectorXd buf(p);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    feature_eval(phi, xs.row(i), buf);
    acc.add(buf);
  }
  const Eigen::VectorXd mean = acc.value() / static_cast<double>(xs.rows());
  return (mean - model_moments).squaredNorm();
}

DiscrepancyValue ksd_squared(const SteinKernel& kernel, const Dataset& xs,
                             const ParamVector& theta, EstimatorKind kind) {
  if (xs.cols() != kernel.data_dim())
    throw DimensionError("sample has dimension " + std::to_string(xs.cols()) +
                         ", kernel expects " + std::to_string(kernel.data_dim()));
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  if (kind == EstimatorKind::U && n < 2)
    throw ShapeError("off-diagonal estimator needs at least two rows");

  const Eigen::Index d = xs.cols();
  SampleMatrix scores(xs.rows(), d);
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    scores.row(i) = kernel.score(xs.row(i), theta).transpose();

  const bool diag = kind == EstimatorKind::V;
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanSum> partial(nblocks);
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanSum acc;
    SmoothKernelDerivatives c;
    c.resize(d);
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const auto si = scores.row(ii).transpose();
      for (std::size_t j = 0; j < i; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        eval_with_derivatives(kernel.base(), xs.row(jj), xs.row(ii), c);
        const auto sj = scores.row(jj).transpose();
        const double v = c.div_xy + sj.dot(c.grad_y) + si.dot(c.grad_x) +
                         sj.dot(si) * c.value;
        acc.add(2.0 * v);
      }
      if (diag) {
        eval_with_derivatives(kernel.base(), xs.row(ii), xs.row(ii), c);
        acc.add(c.div_xy + si.dot(c.grad_y) + si.dot(c.grad_x) +
                si.dot(si) * c.value);
      }
    }
    partial[b] = acc;
  });
  KahanSum total;
  for (const auto& p : partial) total.merge(p);

  const double dn = static_cast<double>(n);
  DiscrepancyValue out;
  out.squared = total.value() / (diag ? dn * dn : dn * (dn - 1.0));
  out.value = std::sqrt(std::max(out.squared, 0.0));
  out.kind = kind;
  out.n = xs.rows();
  out.m = xs.rows();
  return out;
}

MmdObjective::MmdObjective(BaseKernel kernel, Dataset xs)
    : kernel_(std::move(kernel)), xs_(std::move(xs)) {
  validate_kernel(kernel_);
  const double n = static_cast<double>(xs_.rows());
  std::visit(overloaded{[&](const GaussianRbf& k) {
                          const RbfFn f{
                              1.0 / (2.0 * k.lengthscale * k.lengthscale), xs_.cols()};
                          self_x_ = blocked_self_sum(xs_.samples(), f, true) / (n * n);
                        },
                        [&](const InverseMultiquadric& k) {
                          const ImqFn f{1.0 / (k.scale * k.scale), k.exponent,
                                        xs_.cols()};
                          self_x_ = blocked_self_sum(xs_.samples(), f, true) / (n * n);
                        },
                        [&](const FeatureKernel& k) {
                          if (xs_.cols() != feature_input_dim(k.features))
                            throw DimensionError(
                                "feature map expects dimension " +
                                std::to_string(feature_input_dim(k.features)));
                          transformed_ = feature_transform(k.features, xs_);
                          const DotFn f{transformed_.cols()};
                          self_x_ =
                              blocked_self_sum(transformed_, f, true) / (n * n);
                        }},
             kernel_);
}

namespace {

template <class F>
double mmd_against_fixed_self(const SampleMatrix& x, double self_x,
                              const SampleMatrix& y, const F& f) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  const double self_y = blocked_self_sum(y, f, true) / (m * m);
  const double cross = (first_is_canonical_outer(x, y)
                            ? blocked_cross_sum(x, y, f)
                            : blocked_cross_sum(y, x, f)) /
                       (n * m);
  return (self_x + self_y) - 2.0 * cross;
}

}  // namespace

double MmdObjective::operator()(const Dataset& ys) const {
  if (ys.cols() != xs_.cols())
    throw DimensionError("samples have dimensions " + std::to_string(xs_.cols()) +
                         " and " + std::to_string(ys.cols()));
  return std::visit(
      overloaded{[&](const GaussianRbf& k) {
                   const RbfFn f{1.0 / (2.0 * k.lengthscale * k.lengthscale),
                                 xs_.cols()};
                   return mmd_against_fixed_self(xs_.samples(), self_x_,
                                                 ys.samples(), f);
                 },
                 [&](const InverseMultiquadric& k) {
                   const ImqFn f{1.0 / (k.scale * k.scale), k.exponent, xs_.cols()};
                   return mmd_against_fixed_self(xs_.samples(), self_x_,
                                                 ys.samples(), f);
                 },
                 [&](const FeatureKernel& k) {
                   const SampleMatrix fy = feature_transform(k.features, ys);
                   const DotFn f{transformed_.cols()};
                   return mmd_against_fixed_self(transformed_, self_x_, fy, f);
                 }},
      kernel_);
}

WitnessFunction::WitnessFunction(BaseKernel kernel, Dataset xs, Dataset ys)
    : kernel_(std::move(kernel)), xs_(std::move(xs)), ys_(std::move(ys)) {
  const DiscrepancyValue dv = mmd_squared(kernel_, xs_, ys_, EstimatorKind::V);
  normalizer_ = dv.value;
  if (!(normalizer_ > 1e-12))
    throw DegenerateError(
        "witness undefined: the two samples have discrepancy <= 1e-12");
}

double WitnessFunction::eval(Eigen::Ref<const Eigen::VectorXd> z) const {
  if (z.size() != xs_.cols())
    throw DimensionError("point has dimension " + std::to_string(z.size()) +
                         ", samples have " + std::to_string(xs_.cols()));
  KahanSum from_x, from_y;
  for (Eigen::Index i = 0; i < xs_.rows(); ++i)
    from_x.add(kernel_eval(kernel_, xs_.row(i), z));
  for (Eigen::Index j = 0; j < ys_.rows(); ++j)
    from_y.add(kernel_eval(kernel_, ys_.row(j), z));
  return (from_x.value() / static_cast<double>(xs_.rows()) -
          from_y.value() / static_cast<double>(ys_.rows())) /
         normalizer_;
}

double witness_eval(const WitnessFunction& w, Eigen::Ref<const Eigen::VectorXd> z) {
  return w.eval(z);
}

}  // namespace mkd
