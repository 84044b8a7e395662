#include "mkd/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "mkd/detail/expfam_assembly.hpp"
#include "mkd/parallel.hpp"

namespace mkd {

EstimateResult estimate_gmm(const FeatureMap& phi, const Dataset& xs) {
  if (xs.cols() != feature_input_dim(phi))
    throw DimensionError("feature map expects dimension " +
                         std::to_string(feature_input_dim(phi)));
  const Eigen::Index p = feature_dim(phi);
  KahanVector acc(p);
  Eigen::VectorXd buf(p);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    feature_eval(phi, xs.row(i), buf);
    acc.add(buf);
  }
  EstimateResult out;
  out.theta_n = acc.value() / static_cast<double>(xs.rows());
  out.objective = 0.0;  // model moments are matched exactly by construction
  out.method = EstimationMethod::GmmClosedForm;
  out.iterations = 0;
  out.converged = true;
  return out;
}

EstimateResult estimate_min_ksd_expfam(const ExponentialFamily& model,
                                       const SmoothKernel& c, const Dataset& xs) {
  if (xs.rows() < 2) throw ShapeError("estimation needs at least two rows");
  validate_kernel(to_base_kernel(c));

  detail::QuadraticTerms q = detail::assemble_quadratic(c, model, xs, true);
  const Eigen::Index p = model.param_dim;

  // Positive-definiteness gate with a single jitter attempt.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.gamma);
  double min_eig = eig.eigenvalues().minCoeff();
  double threshold = 1e-10 * q.gamma.trace() / static_cast<double>(p);
  if (!(min_eig > threshold)) {
    q.gamma.diagonal().array() += threshold;
    eig.compute(q.gamma);
    min_eig = eig.eigenvalues().minCoeff();
    threshold = 1e-10 * q.gamma.trace() / static_cast<double>(p);
    if (!(min_eig > threshold))
      throw SingularError("quadratic coefficient matrix is not positive definite",
                          min_eig);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(q.gamma);
  if (llt.info() != Eigen::Success)
    throw SingularError("Cholesky factorization failed", min_eig);

  EstimateResult out;
  out.theta_n = llt.solve(-q.beta);
  out.method = EstimationMethod::KsdLinearSolve;
  out.iterations = 0;
  out.converged = true;
  if (!model.domain.contains(out.theta_n)) {
    out.theta_n = model.domain.project(out.theta_n);
    out.converged = false;
  }
  out.objective = q.c0 + 2.0 * q.beta.dot(out.theta_n) +
                  out.theta_n.dot(q.gamma * out.theta_n);
  return out;
}

namespace {

struct Vertex {
  ParamVector x;
  double f = 0.0;
};

class NelderMead {
 public:
  NelderMead(const std::function<double(const ParamVector&)>& objective,
             const ThetaBox& box, double tol_x, double tol_f, long max_iter)
      : objective_(objective), box_(box), tol_x_(tol_x), tol_f_(tol_f),
        max_iter_(max_iter) {}

  // Runs from one start point; returns iterations used via out-parameter.
  Vertex run(const ParamVector& start, long& iterations, bool& converged) {
    const Eigen::Index p = start.size();
    std::vector<Vertex> simplex;
    simplex.reserve(static_cast<std::size_t>(p) + 1);
    simplex.push_back({start, eval(start)});
    for (Eigen::Index i = 0; i < p; ++i) {
      ParamVector v = start;
      const double h = 0.05 * (1.0 + std::abs(start[i]));
      v[i] += h;
      if (v[i] > box_.hi[i]) v[i] = start[i] - h;
      v = box_.project(v);
      simplex.push_back({v, eval(v)});
    }
    sort_simplex(simplex);

    iterations = 0;
    converged = false;
    while (iterations < max_iter_) {
      const Vertex& best = simplex.front();
      const Vertex& worst = simplex.back();
      double diameter = 0.0;
      for (std::size_t i = 1; i < simplex.size(); ++i)
        diameter = std::max(diameter, (simplex[i].x - best.x).norm());
      if (diameter < tol_x_ * (1.0 + best.x.norm()) &&
          worst.f - best.f < tol_f_) {
        converged = true;
        break;
      }
      ++iterations;
      step(simplex);
    }
    return simplex.front();
  }

 private:
  double eval(const ParamVector& x) {
    const double f = objective_(x);
    if (!std::isfinite(f)) throw NonFiniteError("objective returned NaN or infinity");
    return f;
  }

  static void sort_simplex(std::vector<Vertex>& s) {
    std::stable_sort(s.begin(), s.end(),
                     [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  }

  void step(std::vector<Vertex>& s) {
    const std::size_t np = s.size();
    const Eigen::Index p = s.front().x.size();
    ParamVector centroid = ParamVector::Zero(p);
    for (std::size_t i = 0; i + 1 < np; ++i) centroid += s[i].x;
    centroid /= static_cast<double>(np - 1);

    const Vertex& worst = s.back();
    const ParamVector xr = box_.project(centroid + (centroid - worst.x));
    const double fr = eval(xr);

    if (fr < s.front().f) {
      const ParamVector xe = box_.project(centroid + 2.0 * (centroid - worst.x));
      const double fe = eval(xe);
      if (fe < fr)
        s.back() = {xe, fe};
      else
        s.back() = {xr, fr};
    } else if (fr < s[np - 2].f) {
      s.back() = {xr, fr};
    } else if (fr < worst.f) {
      const ParamVector xc = box_.project(centroid + 0.5 * (xr - centroid));
      const double fc = eval(xc);
      if (fc <= fr)
        s.back() = {xc, fc};
      else
        shrink(s);
    } else {
      const ParamVector xc = centroid + 0.5 * (worst.x - centroid);
      const double fc = eval(xc);
      if (fc < worst.f)
        s.back() = {xc, fc};
      else
        shrink(s);
    }
    sort_simplex(s);
  }

  void shrink(std::vector<Vertex>& s) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      s[i].x = s.front().x + 0.5 * (s[i].x - s.front().x);
      s[i].f = eval(s[i].x);
    }
  }

  const std::function<double(const ParamVector&)>& objective_;
  const ThetaBox& box_;
  double tol_x_;
  double tol_f_;
  long max_iter_;
};

}  // namespace

EstimateResult minimize_general(
    const std::function<double(const ParamVector&)>& objective,
    const ParamVector& theta0, const ThetaBox& domain, const OptimizerOptions& opts) {
  const Eigen::Index p = theta0.size();
  if (p < 1) throw DomainError("parameter must have dimension >= 1");
  if (domain.dim() != p)
    throw DimensionError("box has dimension " + std::to_string(domain.dim()) +
                         ", start point has " + std::to_string(p));
  if (!domain.contains(theta0))
    throw DomainError("start point outside the parameter box");
  if (!(opts.tol_x > 0.0) || !(opts.tol_f > 0.0))
    throw DomainError("tolerances must be positive");
  if (opts.restarts < 0) throw DomainError("restarts must be >= 0");

  const long max_iter =
      opts.max_iter > 0 ? opts.max_iter : 2000 * static_cast<long>(p);
  NelderMead nm(objective, domain, opts.tol_x, opts.tol_f, max_iter);

  long total_iterations = 0;
  long iters = 0;
  bool conv = false;
  Vertex best = nm.run(theta0, iters, conv);
  total_iterations += iters;
  bool best_converged = conv;

  for (int r = 1; r <= opts.restarts; ++r) {
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamVector start(p);
    for (Eigen::Index i = 0; i < p; ++i)
      start[i] = theta0[i] + 0.5 * (1.0 + std::abs(theta0[i])) * normal(rng);
    start = domain.project(start);
    Vertex candidate = nm.run(start, iters, conv);
    total_iterations += iters;
    if (candidate.f < best.f) {
      best = candidate;
      best_converged = conv;
    }
  }

  EstimateResult out;
  out.theta_n = best.x;
  out.objective = best.f;
  out.method = EstimationMethod::NelderMead;
  out.iterations = total_iterations;
  out.converged = best_converged;
  out.seed = opts.seed;
  return out;
}

std::function<double(const ParamVector&)> mmd_pushforward_objective(
    const BaseKernel& kernel, const Dataset& xs, const PushforwardModel& model,
    Eigen::Index m, std::uint64_t seed) {
  if (xs.cols() != model.data_dim)
    throw DimensionError("sample has dimension " + std::to_string(xs.cols()) +
                         ", model produces " + std::to_string(model.data_dim));
  if (m < 1) throw DomainError("model sample count must be >= 1");
  auto objective = std::make_shared<MmdObjective>(kernel, xs);
  auto model_copy = std::make_shared<PushforwardModel>(model);
  return [objective, model_copy, m, seed](const ParamVector& theta) {
    const Dataset ys = pushforward_sample(*model_copy, theta, m, seed);
    return (*objective)(ys);
  };
}

}  // namespace mkd
