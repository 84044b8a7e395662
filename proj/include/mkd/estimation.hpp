#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "mkd/dataset.hpp"
#include "mkd/discrepancy.hpp"
#include "mkd/errors.hpp"
#include "mkd/kernels.hpp"
#include "mkd/models.hpp"

namespace mkd {

enum class EstimationMethod { GmmClosedForm, KsdLinearSolve, NelderMead };

struct EstimateResult {
  ParamVector theta_n;
  double objective = 0.0;  // squared discrepancy at theta_n
  EstimationMethod method = EstimationMethod::GmmClosedForm;
  long iterations = 0;   // 0 for closed forms
  bool converged = false;
  std::uint64_t seed = 0;  // RNG seed used for model sampling, if any
};

struct OptimizerOptions {
  /// Simplex-diameter tolerance, scaled by (1 + |theta|) at test time.
  double tol_x = 1e-8;
  /// Objective-spread tolerance across the simplex.
  double tol_f = 1e-12;
  /// Iteration budget; 0 means 2000 * p.
  long max_iter = 0;
  /// Extra seeded starts after the run from theta0; best objective wins.
  int restarts = 0;
  std::uint64_t seed = 0;
};

/// Closed-form moment matching: theta_n = mean of phi over rows, where the
/// model is parametrized by its own moment vector, making the objective
/// exactly zero. iterations = 0, converged = true.
EstimateResult estimate_gmm(const FeatureMap& phi, const Dataset& xs);

/// Closed-form minimizer of the score-kernel objective for a canonical
/// exponential family: the objective is an exact quadratic
/// c0 + 2 beta.theta + theta.Gamma.theta with
///   Gamma = V-statistic of c(x,y) grad_t(x)^T grad_t(y),
///   beta  = V-statistic of the theta-free half of the parameter gradient,
/// solved via Cholesky after a positive-definiteness gate (jitter
/// 1e-10 trace/p added once; SingularError if still not PD). If the
/// unconstrained solution leaves the model box it is projected and
/// converged is set false.
EstimateResult estimate_min_ksd_expfam(const ExponentialFamily& model,
                                       const SmoothKernel& c, const Dataset& xs);

/// Nelder-Mead simplex minimization with projection onto the box.
/// Converged when the simplex diameter falls below tol_x * (1 + |best|)
/// and the objective spread below tol_f; otherwise returns the best vertex
/// found with converged = false once the iteration budget is exhausted.
/// Deterministic given (theta0, opts). Throws DomainError if theta0 is
/// outside the box, NonFiniteError if the objective returns NaN/Inf.
EstimateResult minimize_general(const std::function<double(const ParamVector&)>& objective,
                                const ParamVector& theta0, const ThetaBox& domain,
                                const OptimizerOptions& opts = {});

/// Objective theta -> squared V-kind discrepancy between xs and a fresh
/// m-sample from the model at theta, drawn with common random numbers
/// (fixed seed), so the map is deterministic in theta. The xs self-term is
/// precomputed once.
std::function<double(const ParamVector&)> mmd_pushforward_objective(
    const BaseKernel& kernel, const Dataset& xs, const PushforwardModel& model,
    Eigen::Index m, std::uint64_t seed);

}  // namespace mkd
