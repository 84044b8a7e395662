#include "mkd/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mkd/detail/expfam_assembly.hpp"
#include "mkd/estimation.hpp"
#include "mkd/parallel.hpp"

namespace mkd {

namespace {

// Covariance with divisor n-1 of the rows of `rows`.
Eigen::MatrixXd row_covariance(const SampleMatrix& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index p = rows.cols();
  if (n < 2) throw ShapeError("covariance needs at least two rows");
  KahanVector mean_acc(p);
  for (Eigen::Index i = 0; i < n; ++i) mean_acc.add(rows.row(i).transpose());
  const Eigen::VectorXd mean = mean_acc.value() / static_cast<double>(n);
  SampleMatrix centered = rows;
  centered.rowwise() -= mean.transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(),
                                                 1.0 / static_cast<double>(n - 1));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

double symmetric_min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace

Eigen::MatrixXd gamma_hat(const FeatureMap& phi, const Dataset& xs,
                          const ParamVector& theta) {
  if (xs.cols() != feature_input_dim(phi))
    throw DimensionError("feature map expects dimension " +
                         std::to_string(feature_input_dim(phi)));
  if (theta.size() != feature_dim(phi))
    throw DimensionError("parameter has size " + std::to_string(theta.size()) +
                         ", feature map produces " +
                         std::to_string(feature_dim(phi)));
  // The parameter Hessian of the feature-map kernel is the constant 2*I, so
  // half its V-statistic is the identity exactly.
  return Eigen::MatrixXd::Identity(feature_dim(phi), feature_dim(phi));
}

Eigen::MatrixXd gamma_hat(const SmoothKernel& c, const ExponentialFamily& model,
                          const Dataset& xs, const ParamVector& theta) {
  validate_kernel(to_base_kernel(c));
  if (theta.size() != model.param_dim)
    throw DimensionError("parameter has size " + std::to_string(theta.size()) +
                         ", model expects " + std::to_string(model.param_dim));
  return detail::assemble_quadratic(c, model, xs, false).gamma;
}

Eigen::MatrixXd sigma_hat(const FeatureMap& phi, const Dataset& xs,
                          const ParamVector& theta) {
  const Eigen::Index p = feature_dim(phi);
  if (theta.size() != p)
    throw DimensionError("parameter has size " + std::to_string(theta.size()) +
                         ", feature map produces " + std::to_string(p));
  if (xs.cols() != feature_input_dim(phi))
    throw DimensionError("feature map expects dimension " +
                         std::to_string(feature_input_dim(phi)));
  const Eigen::Index n = xs.rows();
  if (n < 2) throw ShapeError("covariance needs at least two rows");

  SampleMatrix feats(n, p);
  Eigen::VectorXd buf(p);
  KahanVector mean_acc(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    feature_eval(phi, xs.row(i), buf);
    feats.row(i) = buf.transpose();
    mean_acc.add(buf);
  }
  const Eigen::VectorXd feat_mean = mean_acc.value() / static_cast<double>(n);

  // g_i = mean_j (2 theta - phi(x_i) - phi(x_j)) = 2 theta - phi(x_i) - mean phi.
  SampleMatrix g(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    g.row(i) = 2.0 * theta.transpose() - feats.row(i) - feat_mean.transpose();
  return row_covariance(g);
}

Eigen::MatrixXd sigma_hat(const SmoothKernel& c, const ExponentialFamily& model,
                          const Dataset& xs, const ParamVector& theta) {
  validate_kernel(to_base_kernel(c));
  if (xs.rows() < 2) throw ShapeError("covariance needs at least two rows");
  const SampleMatrix g = detail::dtheta_row_means(c, model, xs, theta);
  return row_covariance(g);
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = gamma.rows();
  if (gamma.cols() != p || sigma.rows() != p || sigma.cols() != p)
    throw DimensionError("curvature and covariance must be square and same size");

  const double min_eig = symmetric_min_eigenvalue(gamma);
  if (!(min_eig > 1e-12 * gamma.trace() / static_cast<double>(p)))
    throw SingularError("curvature matrix is numerically singular", min_eig);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(gamma);
  const Eigen::MatrixXd a = lu.solve(sigma);
  Eigen::MatrixXd s = lu.solve(a.transpose()).transpose();
  return 0.5 * (s + s.transpose());
}

AsymptoticCovariance asymptotic_covariance(const FeatureMap& phi, const Dataset& xs,
                                           const ParamVector& theta) {
  AsymptoticCovariance out;
  out.gamma_n = gamma_hat(phi, xs, theta);
  out.sigma_n = sigma_hat(phi, xs, theta);
  out.gamma_min_eig = symmetric_min_eigenvalue(out.gamma_n);
  out.sandwich = sandwich(out.gamma_n, out.sigma_n);
  return out;
}

AsymptoticCovariance asymptotic_covariance(const SmoothKernel& c,
                                           const ExponentialFamily& model,
                                           const Dataset& xs,
                                           const ParamVector& theta) {
  AsymptoticCovariance out;
  out.gamma_n = gamma_hat(c, model, xs, theta);
  out.sigma_n = sigma_hat(c, model, xs, theta);
  out.gamma_min_eig = symmetric_min_eigenvalue(out.gamma_n);
  out.sandwich = sandwich(out.gamma_n, out.sigma_n);
  return out;
}

namespace {

// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
double regularized_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    // Series expansion.
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return std::exp(log_prefactor) * sum;
  }
  // Continued fraction for the upper tail (modified Lentz).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  const double q = std::exp(log_prefactor) * h;
  return 1.0 - q;
}

}  // namespace

double chi2_cdf(int p, double x) {
  if (p < 1) throw DomainError("degrees of freedom must be >= 1");
  if (std::isnan(x)) throw DomainError("chi-square CDF evaluated at NaN");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * static_cast<double>(p), 0.5 * x);
}

double chi2_quantile(int p, double gamma) {
  if (p < 1) throw DomainError("degrees of freedom must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw DomainError("quantile level must lie strictly between 0 and 1");

  double lo = 0.0;
  double hi = std::max(2.0 * static_cast<double>(p), 10.0);
  int guard = 0;
  while (chi2_cdf(p, hi) < gamma) {
    hi *= 2.0;
    if (++guard > 200) throw NonFiniteError("quantile bracket failed to close");
  }
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(p, mid) < gamma)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_distance_to_standard_normal(const std::vector<double>& values) {
  if (values.empty()) throw EmptyError("no values for distribution comparison");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = standard_normal_cdf(sorted[i]);
    d = std::max(d, f - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - f);
  }
  return d;
}

ConfidenceSet::ConfidenceSet(const ParamVector& center,
                             const AsymptoticCovariance& cov,
                             Eigen::Index sample_size, double level)
    : cov_(cov), center_(center), n_(sample_size), level_(level) {
  const Eigen::Index p = center.size();
  if (p < 1) throw DimensionError("confidence set needs a nonempty center");
  if (cov.sigma_n.rows() != p || cov.sigma_n.cols() != p ||
      cov.gamma_n.rows() != p || cov.gamma_n.cols() != p)
    throw DimensionError("covariance blocks must match the parameter dimension");
  if (sample_size < 1) throw ShapeError("sample size must be >= 1");
  if (!(level > 0.0 && level < 1.0))
    throw DomainError("confidence level must lie strictly between 0 and 1");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (cov.sigma_n + cov.sigma_n.transpose()));
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double min_eig = lambda.minCoeff();
  if (!(min_eig > 1e-12 * cov.sigma_n.trace() / static_cast<double>(p)))
    throw SingularError("gradient covariance is numerically singular", min_eig);
  const double floor = 1e-12 * lambda.maxCoeff();
  for (Eigen::Index i = 0; i < p; ++i) {
    if (lambda[i] < floor) {
      lambda[i] = floor;
      floored_ = true;
    }
  }
  const Eigen::MatrixXd inv_sqrt = eig.eigenvectors() *
                                   lambda.array().rsqrt().matrix().asDiagonal() *
                                   eig.eigenvectors().transpose();
  shape_ = inv_sqrt * cov.gamma_n;
  threshold_ = chi2_quantile(static_cast<int>(p), level);
}

ConfidenceSet confidence_set(const ParamVector& theta_n,
                             const AsymptoticCovariance& cov,
                             Eigen::Index sample_size, double gamma) {
  return ConfidenceSet(theta_n, cov, sample_size, gamma);
}

bool ConfidenceSet::contains(const ParamVector& theta) const {
  if (theta.size() != center_.size())
    throw DimensionError("parameter has size " + std::to_string(theta.size()) +
                         ", center has " + std::to_string(center_.size()));
  const double stat =
      static_cast<double>(n_) * (shape_ * (theta - center_)).squaredNorm();
  return stat <= threshold_;
}

ParamVector ConfidenceSet::standardized(const ParamVector& theta) const {
  if (theta.size() != center_.size())
    throw DimensionError("parameter has size " + std::to_string(theta.size()) +
                         ", center has " + std::to_string(center_.size()));
  return std::sqrt(static_cast<double>(n_)) * (shape_ * (theta - center_));
}

namespace {

struct ScenarioKind {
  bool gmm = false;
};

ScenarioKind resolve_scenario(const std::string& name) {
  if (name == "gmm-gaussian-mean") return {true};
  if (name == "ksd-gaussian-natparams") return {false};
  throw DomainError("unknown scenario '" + name +
                    "' (expected gmm-gaussian-mean or ksd-gaussian-natparams)");
}

}  // namespace

CoverageReport coverage_simulation(const CoverageConfig& config) {
  const ScenarioKind kind = resolve_scenario(config.scenario);
  if (config.n < 2) throw ShapeError("coverage study needs n >= 2");
  if (config.replicates < 1) throw ShapeError("coverage study needs replicates >= 1");
  if (!(config.gamma > 0.0 && config.gamma < 1.0))
    throw DomainError("confidence level must lie strictly between 0 and 1");
  if (config.dim < 1) throw DimensionError("dimension must be >= 1");
  if (!kind.gmm && config.dim != 1)
    throw DimensionError("the natural-parameter scenario is one-dimensional");
  if (!kind.gmm && !(config.lengthscale > 0.0))
    throw DomainError("lengthscale must be positive");

  ParamVector theta_star = config.theta_star;
  if (theta_star.size() == 0) {
    if (kind.gmm) {
      theta_star = ParamVector::Zero(config.dim);
    } else {
      theta_star = ParamVector(2);
      theta_star << 0.0, 1.0;
    }
  }

  const Eigen::Index p = kind.gmm ? config.dim : 2;
  if (theta_star.size() != p)
    throw DimensionError("true parameter has size " +
                         std::to_string(theta_star.size()) + ", expected " +
                         std::to_string(p));
  if (!theta_star.allFinite())
    throw DomainError("true parameter must be finite");

  const ExponentialFamily family = gaussian_location_scale_instance(1);
  if (!kind.gmm && !family.domain.contains(theta_star))
    throw DomainError("true parameter lies outside the model domain");

  const FeatureMap identity_features = IdentityFeatures{config.dim};
  const SmoothKernel rbf = GaussianRbf{config.lengthscale};

  CoverageReport report;
  report.scenario = config.scenario;
  report.n = config.n;
  report.replicates = config.replicates;
  report.gamma = config.gamma;
  report.seed = config.seed;
  report.theta_star = theta_star;
  report.variance_caution =
      static_cast<double>(p) * static_cast<double>(p) >
      static_cast<double>(config.n) / 10.0;
  report.per_replicate.resize(static_cast<std::size_t>(config.replicates));

  parallel_blocks(
      static_cast<Eigen::Index>(config.replicates), 1,
      [&](Eigen::Index, Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index r = begin; r < end; ++r) {
          const std::uint64_t rep_seed =
              config.seed + static_cast<std::uint64_t>(r) + 1;
          ReplicateOutcome& slot = report.per_replicate[static_cast<std::size_t>(r)];
          if (kind.gmm) {
            std::mt19937_64 rng(rep_seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            SampleMatrix draws(config.n, config.dim);
            for (Eigen::Index i = 0; i < config.n; ++i)
              for (Eigen::Index j = 0; j < config.dim; ++j)
                draws(i, j) = theta_star[j] + normal(rng);
            const Dataset data(std::move(draws));
            const EstimateResult fit = estimate_gmm(identity_features, data);
            const AsymptoticCovariance cov =
                asymptotic_covariance(identity_features, data, fit.theta_n);
            const ConfidenceSet set(fit.theta_n, cov, data.rows(), config.gamma);
            slot.theta_n = fit.theta_n;
            slot.covered = set.contains(theta_star);
            slot.residual = std::sqrt(static_cast<double>(data.rows())) *
                            (set.shape() * (fit.theta_n - theta_star));
          } else {
            const Dataset data = family.sampler(theta_star, config.n, rep_seed);
            const EstimateResult fit = estimate_min_ksd_expfam(family, rbf, data);
            const AsymptoticCovariance cov =
                asymptotic_covariance(rbf, family, data, fit.theta_n);
            const ConfidenceSet set(fit.theta_n, cov, data.rows(), config.gamma);
            slot.theta_n = fit.theta_n;
            slot.covered = set.contains(theta_star);
            slot.residual = std::sqrt(static_cast<double>(data.rows())) *
                            (set.shape() * (fit.theta_n - theta_star));
          }
        }
      });

  KahanVector theta_acc(p);
  long covered_count = 0;
  std::vector<double> residual_coords;
  residual_coords.reserve(report.per_replicate.size() * static_cast<std::size_t>(p));
  for (const ReplicateOutcome& rep : report.per_replicate) {
    theta_acc.add(rep.theta_n);
    if (rep.covered) ++covered_count;
    for (Eigen::Index j = 0; j < p; ++j) residual_coords.push_back(rep.residual[j]);
  }
  report.coverage =
      static_cast<double>(covered_count) / static_cast<double>(config.replicates);
  report.mean_theta = theta_acc.value() / static_cast<double>(config.replicates);
  report.ks_distance = ks_distance_to_standard_normal(residual_coords);
  return report;
}

}  // namespace mkd
