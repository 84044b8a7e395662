// Command-line front end: wires datasets, kernels, models, estimation and
// reports. Subcommands: mmd, ksd, estimate, witness, coverage.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mkd/asymptotics.hpp"
#include "mkd/dataset.hpp"
#include "mkd/discrepancy.hpp"
#include "mkd/errors.hpp"
#include "mkd/estimation.hpp"
#include "mkd/kernels.hpp"
#include "mkd/models.hpp"
#include "mkd/parallel.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kSchema = "mkd/1";
constexpr double kJitterScale = 1e-10;
constexpr std::size_t kMedianSubsample = 1000;

ordered_json to_json(const Eigen::VectorXd& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

ordered_json to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

mkd::Dataset load_dataset(const std::string& path, bool csv_header) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return mkd::load_json(path);
  return mkd::load_csv(path, csv_header);
}

mkd::Dataset pool_rows(const mkd::Dataset& a, const mkd::Dataset& b) {
  mkd::SampleMatrix m(a.rows() + b.rows(), a.cols());
  m.topRows(a.rows()) = a.samples();
  m.bottomRows(b.rows()) = b.samples();
  return mkd::Dataset(std::move(m));
}

// Kernel flags shared by the subcommands that select a kernel.
struct KernelFlags {
  std::string kernel = "rbf";
  std::string lengthscale = "median";
  double scale = 1.0;
  double exponent = 0.5;
  long num_features = 256;
};

void add_kernel_flags(CLI::App* cmd, KernelFlags& kf, bool allow_rff) {
  std::vector<std::string> variants = {"rbf", "imq"};
  if (allow_rff) variants.push_back("rff");
  cmd->add_option("--kernel", kf.kernel, "kernel variant")
      ->check(CLI::IsMember(variants))
      ->capture_default_str();
  cmd->add_option("--lengthscale", kf.lengthscale,
                  "rbf/rff lengthscale: a positive number or 'median'")
      ->capture_default_str();
  cmd->add_option("--scale", kf.scale, "imq scale parameter")
      ->capture_default_str();
  cmd->add_option("--exponent", kf.exponent, "imq exponent in (0,1)")
      ->capture_default_str();
  if (allow_rff)
    cmd->add_option("--num-features", kf.num_features,
                    "number of random Fourier features")
        ->capture_default_str();
}

// "median" -> nullopt; otherwise the parsed positive value.
std::optional<double> parse_lengthscale(const std::string& s,
                                        std::vector<std::string>& issues) {
  if (s == "median") return std::nullopt;
  std::size_t pos = 0;
  double value = 0.0;
  bool ok = true;
  try {
    value = std::stod(s, &pos);
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok || pos != s.size() || !(value > 0.0))
    issues.push_back("--lengthscale: expected a positive number or 'median', got '" +
                     s + "'");
  return value;
}

void validate_kernel_flags(const KernelFlags& kf, std::vector<std::string>& issues) {
  if (kf.kernel == "imq") {
    if (!(kf.scale > 0.0)) issues.push_back("--scale: must be positive");
    if (!(kf.exponent > 0.0 && kf.exponent < 1.0))
      issues.push_back("--exponent: must lie strictly between 0 and 1");
  } else {
    parse_lengthscale(kf.lengthscale, issues);
  }
  if (kf.kernel == "rff" && kf.num_features < 1)
    issues.push_back("--num-features: must be >= 1");
}

// Resolves the flags into a kernel, computing the median-heuristic
// lengthscale from `scale_data` when requested.
struct ResolvedKernel {
  mkd::BaseKernel kernel = mkd::GaussianRbf{1.0};
  std::optional<double> lengthscale_used;
};

ResolvedKernel build_kernel(const KernelFlags& kf, const mkd::Dataset& scale_data,
                            std::uint64_t seed) {
  ResolvedKernel out;
  if (kf.kernel == "imq") {
    out.kernel = mkd::InverseMultiquadric{kf.scale, kf.exponent};
    return out;
  }
  std::vector<std::string> issues;
  std::optional<double> given = parse_lengthscale(kf.lengthscale, issues);
  const double ls = given ? *given
                          : mkd::median_heuristic_lengthscale(
                                scale_data, kMedianSubsample, seed);
  out.lengthscale_used = ls;
  if (kf.kernel == "rbf") {
    out.kernel = mkd::GaussianRbf{ls};
  } else {
    out.kernel = mkd::FeatureKernel{mkd::RandomFourierFeatures(
        scale_data.cols(), kf.num_features, ls, seed)};
  }
  return out;
}

mkd::SmoothKernel to_smooth(const mkd::BaseKernel& k) {
  if (const auto* rbf = std::get_if<mkd::GaussianRbf>(&k)) return *rbf;
  return std::get<mkd::InverseMultiquadric>(k);
}

ordered_json kernel_config_json(const KernelFlags& kf,
                                const ResolvedKernel& resolved) {
  ordered_json j;
  j["kernel"] = kf.kernel;
  if (kf.kernel == "imq") {
    j["scale"] = kf.scale;
    j["exponent"] = kf.exponent;
  } else {
    j["lengthscale"] = kf.lengthscale;
    if (resolved.lengthscale_used)
      j["lengthscale_used"] = *resolved.lengthscale_used;
    j["median_subsample"] = kMedianSubsample;
  }
  if (kf.kernel == "rff") j["num_features"] = kf.num_features;
  return j;
}

void fail_if_invalid(const std::vector<std::string>& issues) {
  if (issues.empty()) return;
  std::string report = "invalid configuration:";
  for (const std::string& issue : issues) report += "\n  " + issue;
  throw mkd::DomainError(report);
}

// Writes the JSON either to stdout (no --out) or to the file plus a short
// human summary on stdout.
void emit(const ordered_json& result, const std::string& out_path,
          const std::string& summary) {
  const std::string text = result.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream file(out_path);
  if (!file) throw mkd::IoError("cannot open output file '" + out_path + "'");
  file << text;
  file.flush();
  if (file.fail()) throw mkd::IoError("failed writing output file '" + out_path + "'");
  std::cout << summary;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s + ")";
}

const char* kind_name(mkd::EstimatorKind kind) {
  return kind == mkd::EstimatorKind::V ? "V" : "U";
}

// ---------------------------------------------------------------------------
// mmd

struct MmdArgs {
  std::string x_path, y_path, out_path;
  bool csv_header = false;
  KernelFlags kernel;
  std::string kind = "V";
  std::uint64_t seed = 0;
};

void run_mmd(const MmdArgs& args) {
  std::vector<std::string> issues;
  validate_kernel_flags(args.kernel, issues);
  fail_if_invalid(issues);

  const mkd::Dataset xs = load_dataset(args.x_path, args.csv_header);
  const mkd::Dataset ys = load_dataset(args.y_path, args.csv_header);
  if (xs.cols() != ys.cols())
    throw mkd::DimensionError("--x has dimension " + std::to_string(xs.cols()) +
                              ", --y has " + std::to_string(ys.cols()));

  const ResolvedKernel rk = build_kernel(args.kernel, pool_rows(xs, ys), args.seed);
  const mkd::EstimatorKind kind =
      args.kind == "V" ? mkd::EstimatorKind::V : mkd::EstimatorKind::U;
  const mkd::DiscrepancyValue d = mkd::mmd_squared(rk.kernel, xs, ys, kind);

  ordered_json result;
  result["schema"] = kSchema;
  result["command"] = "mmd";
  result["mmd2"] = d.squared;
  result["mmd"] = d.value;
  result["kind"] = kind_name(d.kind);
  result["n"] = static_cast<std::int64_t>(d.n);
  result["m"] = static_cast<std::int64_t>(d.m);
  if (rk.lengthscale_used) result["lengthscale_used"] = *rk.lengthscale_used;
  ordered_json cfg;
  cfg["x"] = args.x_path;
  cfg["y"] = args.y_path;
  cfg["csv_header"] = args.csv_header;
  cfg.update(kernel_config_json(args.kernel, rk));
  cfg["kind"] = args.kind;
  cfg["seed"] = args.seed;
  cfg["threads"] = mkd::max_threads();
  result["resolved_config"] = cfg;

  std::ostringstream summary;
  summary << "discrepancy " << format_double(d.value) << " (squared "
          << format_double(d.squared) << ", " << kind_name(d.kind)
          << "-statistic, n=" << d.n << ", m=" << d.m << ")\n";
  emit(result, args.out_path, summary.str());
}

// ---------------------------------------------------------------------------
// shared model resolution for score-based commands

mkd::ExponentialFamily make_expfam(const std::string& name, Eigen::Index d) {
  if (name == "gaussian-natparams") return mkd::gaussian_location_scale_instance(d);
  if (name == "gaussian-location") return mkd::gaussian_location_instance(d);
  throw mkd::ModelKindError("unknown exponential-family model '" + name + "'");
}

// ---------------------------------------------------------------------------
// ksd

struct KsdArgs {
  std::string data_path, out_path;
  bool csv_header = false;
  std::string model = "gaussian-natparams";
  std::vector<double> theta;
  KernelFlags kernel;
  std::string kind = "V";
  std::uint64_t seed = 0;
};

void run_ksd(const KsdArgs& args) {
  std::vector<std::string> issues;
  validate_kernel_flags(args.kernel, issues);
  if (args.theta.empty()) issues.push_back("--theta: at least one value required");
  fail_if_invalid(issues);

  const mkd::Dataset data = load_dataset(args.data_path, args.csv_header);
  const mkd::ExponentialFamily family = make_expfam(args.model, data.cols());

  mkd::ParamVector theta =
      Eigen::Map<const Eigen::VectorXd>(args.theta.data(), args.theta.size());
  if (theta.size() != family.param_dim)
    throw mkd::DimensionError("--theta: expected " +
                              std::to_string(family.param_dim) + " values, got " +
                              std::to_string(theta.size()));
  if (!family.domain.contains(theta))
    throw mkd::DomainError("--theta: outside the model's parameter domain");

  const ResolvedKernel rk = build_kernel(args.kernel, data, args.seed);
  const mkd::SteinKernel stein =
      mkd::SteinKernel::for_exponential_family(to_smooth(rk.kernel), family);
  const mkd::EstimatorKind kind =
      args.kind == "V" ? mkd::EstimatorKind::V : mkd::EstimatorKind::U;
  const mkd::DiscrepancyValue d = mkd::ksd_squared(stein, data, theta, kind);

  ordered_json result;
  result["schema"] = kSchema;
  result["command"] = "ksd";
  result["ksd2"] = d.squared;
  result["ksd"] = d.value;
  result["kind"] = kind_name(d.kind);
  result["n"] = static_cast<std::int64_t>(d.n);
  result["theta"] = to_json(theta);
  if (rk.lengthscale_used) result["lengthscale_used"] = *rk.lengthscale_used;
  ordered_json cfg;
  cfg["data"] = args.data_path;
  cfg["csv_header"] = args.csv_header;
  cfg["model"] = args.model;
  cfg.update(kernel_config_json(args.kernel, rk));
  cfg["kind"] = args.kind;
  cfg["seed"] = args.seed;
  cfg["threads"] = mkd::max_threads();
  result["resolved_config"] = cfg;

  std::ostringstream summary;
  summary << "score discrepancy " << format_double(d.value) << " (squared "
          << format_double(d.squared) << ", " << kind_name(d.kind)
          << "-statistic, n=" << d.n << ") at theta " << format_vector(theta)
          << "\n";
  emit(result, args.out_path, summary.str());
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string data_path, out_path;
  bool csv_header = false;
  std::string method;
  std::string model;  // empty -> per-method default
  std::string features = "identity";
  KernelFlags kernel;
  std::vector<double> theta0;
  double gamma = 0.95;
  double tol_x = 1e-8;
  double tol_f = 1e-12;
  long max_iter = 0;
  int restarts = 0;
  long model_samples = 0;
  std::uint64_t seed = 0;
  // set-by-user markers filled from CLI11 counts
  bool model_given = false;
  bool features_given = false;
  bool theta0_given = false;
};

const char* method_name(mkd::EstimationMethod m) {
  switch (m) {
    case mkd::EstimationMethod::GmmClosedForm:
      return "gmm-closed-form";
    case mkd::EstimationMethod::KsdLinearSolve:
      return "ksd-linear-solve";
    case mkd::EstimationMethod::NelderMead:
      return "nelder-mead";
  }
  return "unknown";
}

ordered_json uq_json(const mkd::AsymptoticCovariance& cov, Eigen::Index n,
                     const mkd::ParamVector& theta_n, double gamma) {
  const Eigen::Index p = theta_n.size();
  const double q1 = mkd::chi2_quantile(1, gamma);
  ordered_json lower = ordered_json::array();
  ordered_json upper = ordered_json::array();
  for (Eigen::Index r = 0; r < p; ++r) {
    const double variance = std::max(cov.sandwich(r, r), 0.0);
    const double halfwidth = std::sqrt(q1 * variance / static_cast<double>(n));
    lower.push_back(theta_n[r] - halfwidth);
    upper.push_back(theta_n[r] + halfwidth);
  }
  ordered_json j;
  j["gamma_n"] = to_json(cov.gamma_n);
  j["sigma_n"] = to_json(cov.sigma_n);
  j["sandwich"] = to_json(cov.sandwich);
  j["gamma_min_eig"] = cov.gamma_min_eig;
  ordered_json ci;
  ci["gamma"] = gamma;
  ci["lower"] = lower;
  ci["upper"] = upper;
  j["confidence_intervals"] = ci;
  return j;
}

void run_estimate(const EstimateArgs& args) {
  std::vector<std::string> issues;
  const bool is_gmm = args.method == "gmm";
  const bool is_ksd = args.method == "ksd-expfam";
  const bool is_push = args.method == "mmd-pushforward";

  std::string model = args.model;
  if (!args.model_given) {
    if (is_ksd) model = "gaussian-natparams";
    if (is_push) model = "location-pushforward";
  }
  if (is_gmm && args.model_given)
    issues.push_back("--model: not used with --method gmm (set --features instead)");
  if (is_ksd && model != "gaussian-natparams" && model != "gaussian-location")
    issues.push_back("--model: must be gaussian-natparams or gaussian-location "
                     "for --method ksd-expfam");
  if (is_push && model != "location-pushforward")
    issues.push_back("--model: must be location-pushforward for "
                     "--method mmd-pushforward");
  if (!is_gmm && args.features_given)
    issues.push_back("--features: only used with --method gmm");
  if (!is_push && args.theta0_given)
    issues.push_back("--theta0: only used with --method mmd-pushforward");
  if (is_gmm && args.features != "identity" && args.features != "rff")
    issues.push_back("--features: must be identity or rff");
  if (!is_gmm) validate_kernel_flags(args.kernel, issues);
  if (is_gmm && args.features == "rff") {
    if (args.kernel.num_features < 1)
      issues.push_back("--num-features: must be >= 1");
    parse_lengthscale(args.kernel.lengthscale, issues);
  }
  if (!(args.gamma > 0.0 && args.gamma < 1.0))
    issues.push_back("--gamma: must lie strictly between 0 and 1");
  if (!(args.tol_x > 0.0)) issues.push_back("--tol-x: must be positive");
  if (!(args.tol_f > 0.0)) issues.push_back("--tol-f: must be positive");
  if (args.max_iter < 0) issues.push_back("--max-iter: must be >= 0");
  if (args.restarts < 0) issues.push_back("--restarts: must be >= 0");
  if (args.model_samples < 0) issues.push_back("--model-samples: must be >= 0");
  fail_if_invalid(issues);

  const mkd::Dataset data = load_dataset(args.data_path, args.csv_header);
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();

  ordered_json result;
  result["schema"] = kSchema;
  result["command"] = "estimate";
  result["method"] = args.method;

  ordered_json cfg;
  cfg["data"] = args.data_path;
  cfg["csv_header"] = args.csv_header;
  cfg["method"] = args.method;

  mkd::EstimateResult fit;
  std::ostringstream summary;

  if (is_gmm) {
    mkd::FeatureMap phi = mkd::IdentityFeatures{d};
    std::optional<double> ls_used;
    if (args.features == "rff") {
      std::vector<std::string> none;
      std::optional<double> given = parse_lengthscale(args.kernel.lengthscale, none);
      const double ls = given ? *given
                              : mkd::median_heuristic_lengthscale(
                                    data, kMedianSubsample, args.seed);
      ls_used = ls;
      phi = mkd::RandomFourierFeatures(d, args.kernel.num_features, ls, args.seed);
    }
    fit = mkd::estimate_gmm(phi, data);
    const mkd::AsymptoticCovariance cov =
        mkd::asymptotic_covariance(phi, data, fit.theta_n);
    result["theta_n"] = to_json(fit.theta_n);
    result["objective"] = fit.objective;
    result["estimator"] = method_name(fit.method);
    result["iterations"] = fit.iterations;
    result["converged"] = fit.converged;
    result["n"] = static_cast<std::int64_t>(n);
    result["uncertainty"] = uq_json(cov, n, fit.theta_n, args.gamma);
    cfg["features"] = args.features;
    if (args.features == "rff") {
      cfg["lengthscale"] = args.kernel.lengthscale;
      if (ls_used) cfg["lengthscale_used"] = *ls_used;
      cfg["median_subsample"] = kMedianSubsample;
      cfg["num_features"] = args.kernel.num_features;
    }
  } else if (is_ksd) {
    const mkd::ExponentialFamily family = make_expfam(model, d);
    const ResolvedKernel rk = build_kernel(args.kernel, data, args.seed);
    const mkd::SmoothKernel smooth = to_smooth(rk.kernel);
    fit = mkd::estimate_min_ksd_expfam(family, smooth, data);
    const mkd::AsymptoticCovariance cov =
        mkd::asymptotic_covariance(smooth, family, data, fit.theta_n);
    result["theta_n"] = to_json(fit.theta_n);
    result["objective"] = fit.objective;
    result["estimator"] = method_name(fit.method);
    result["iterations"] = fit.iterations;
    result["converged"] = fit.converged;
    result["n"] = static_cast<std::int64_t>(n);
    result["uncertainty"] = uq_json(cov, n, fit.theta_n, args.gamma);
    cfg["model"] = model;
    cfg.update(kernel_config_json(args.kernel, rk));
    cfg["jitter"] = kJitterScale;
  } else {
    const mkd::PushforwardModel push = mkd::location_pushforward_instance(d);
    const ResolvedKernel rk = build_kernel(args.kernel, data, args.seed);
    const long m = args.model_samples > 0
                       ? args.model_samples
                       : std::max<long>(static_cast<long>(n), 1024);
    const auto objective =
        mkd::mmd_pushforward_objective(rk.kernel, data, push, m, args.seed);

    mkd::ParamVector theta0(d);
    if (args.theta0_given) {
      if (static_cast<Eigen::Index>(args.theta0.size()) != d)
        throw mkd::DimensionError("--theta0: expected " + std::to_string(d) +
                                  " values, got " +
                                  std::to_string(args.theta0.size()));
      theta0 = Eigen::Map<const Eigen::VectorXd>(args.theta0.data(),
                                                 args.theta0.size());
    } else {
      // Moment-based warm start: the sample mean.
      mkd::KahanVector acc(d);
      for (Eigen::Index i = 0; i < n; ++i) acc.add(data.row(i));
      theta0 = acc.value() / static_cast<double>(n);
    }

    mkd::OptimizerOptions opts;
    opts.tol_x = args.tol_x;
    opts.tol_f = args.tol_f;
    opts.max_iter = args.max_iter;
    opts.restarts = args.restarts;
    opts.seed = args.seed;
    fit = mkd::minimize_general(objective, theta0, push.domain, opts);

    result["theta_n"] = to_json(fit.theta_n);
    result["objective"] = fit.objective;
    result["estimator"] = method_name(fit.method);
    result["iterations"] = fit.iterations;
    result["converged"] = fit.converged;
    result["n"] = static_cast<std::int64_t>(n);
    result["uncertainty"] =
        "not available for pushforward models: the sandwich covariance needs "
        "parameter derivatives of the kernel, which sampled objectives do not "
        "expose";
    cfg["model"] = model;
    cfg.update(kernel_config_json(args.kernel, rk));
    cfg["model_samples"] = m;
    cfg["theta0"] = to_json(theta0);
    cfg["tol_x"] = args.tol_x;
    cfg["tol_f"] = args.tol_f;
    cfg["max_iter"] =
        args.max_iter > 0 ? args.max_iter : 2000 * static_cast<long>(d);
    cfg["restarts"] = args.restarts;
  }

  cfg["gamma"] = args.gamma;
  cfg["seed"] = args.seed;
  cfg["threads"] = mkd::max_threads();
  result["resolved_config"] = cfg;

  summary << "theta_n " << format_vector(fit.theta_n) << "\n"
          << "objective " << format_double(fit.objective) << " ("
          << method_name(fit.method) << ", "
          << (fit.converged ? "converged" : "not converged") << ", iterations "
          << fit.iterations << ")\n";
  if (result["uncertainty"].is_object()) {
    const ordered_json& ci = result["uncertainty"]["confidence_intervals"];
    for (std::size_t r = 0; r < ci["lower"].size(); ++r)
      summary << "theta[" << r << "] in ["
              << format_double(ci["lower"][r].get<double>()) << ", "
              << format_double(ci["upper"][r].get<double>()) << "] at level "
              << args.gamma << "\n";
  } else {
    summary << "uncertainty: " << result["uncertainty"].get<std::string>() << "\n";
  }
  emit(result, args.out_path, summary.str());
}

// ---------------------------------------------------------------------------
// witness

struct WitnessArgs {
  std::string x_path, y_path, points_path, out_path;
  bool csv_header = false;
  KernelFlags kernel;
  std::uint64_t seed = 0;
};

void run_witness(const WitnessArgs& args) {
  std::vector<std::string> issues;
  validate_kernel_flags(args.kernel, issues);
  fail_if_invalid(issues);

  const mkd::Dataset xs = load_dataset(args.x_path, args.csv_header);
  const mkd::Dataset ys = load_dataset(args.y_path, args.csv_header);
  const mkd::Dataset points = load_dataset(args.points_path, args.csv_header);
  if (xs.cols() != ys.cols())
    throw mkd::DimensionError("--x has dimension " + std::to_string(xs.cols()) +
                              ", --y has " + std::to_string(ys.cols()));
  if (points.cols() != xs.cols())
    throw mkd::DimensionError("--points has dimension " +
                              std::to_string(points.cols()) + ", samples have " +
                              std::to_string(xs.cols()));

  const ResolvedKernel rk = build_kernel(args.kernel, pool_rows(xs, ys), args.seed);
  const mkd::WitnessFunction witness(rk.kernel, xs, ys);
  ordered_json values = ordered_json::array();
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    values.push_back(witness.eval(points.row(i)));

  ordered_json result;
  result["schema"] = kSchema;
  result["command"] = "witness";
  result["discrepancy"] = witness.normalizer();
  result["n"] = static_cast<std::int64_t>(xs.rows());
  result["m"] = static_cast<std::int64_t>(ys.rows());
  result["num_points"] = static_cast<std::int64_t>(points.rows());
  result["values"] = values;
  if (rk.lengthscale_used) result["lengthscale_used"] = *rk.lengthscale_used;
  ordered_json cfg;
  cfg["x"] = args.x_path;
  cfg["y"] = args.y_path;
  cfg["points"] = args.points_path;
  cfg["csv_header"] = args.csv_header;
  cfg.update(kernel_config_json(args.kernel, rk));
  cfg["seed"] = args.seed;
  cfg["threads"] = mkd::max_threads();
  result["resolved_config"] = cfg;

  std::ostringstream summary;
  summary << "witness evaluated at " << points.rows()
          << " points; discrepancy " << format_double(witness.normalizer()) << "\n";
  emit(result, args.out_path, summary.str());
}

// ---------------------------------------------------------------------------
// coverage

struct CoverageArgs {
  std::string scenario, out_path;
  long n = 2000;
  int replicates = 500;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  long dim = 1;
  std::vector<double> theta_star;
  double lengthscale = 1.0;
};

void run_coverage(const CoverageArgs& args) {
  std::vector<std::string> issues;
  if (args.scenario != "gmm-gaussian-mean" &&
      args.scenario != "ksd-gaussian-natparams")
    issues.push_back(
        "--scenario: must be gmm-gaussian-mean or ksd-gaussian-natparams");
  if (args.n < 2) issues.push_back("--n: must be >= 2");
  if (args.replicates < 1) issues.push_back("--replicates: must be >= 1");
  if (!(args.gamma > 0.0 && args.gamma < 1.0))
    issues.push_back("--gamma: must lie strictly between 0 and 1");
  if (args.dim < 1) issues.push_back("--dim: must be >= 1");
  if (!(args.lengthscale > 0.0)) issues.push_back("--lengthscale: must be positive");
  fail_if_invalid(issues);

  mkd::CoverageConfig config;
  config.scenario = args.scenario;
  config.n = args.n;
  config.replicates = args.replicates;
  config.gamma = args.gamma;
  config.seed = args.seed;
  config.dim = args.dim;
  config.lengthscale = args.lengthscale;
  if (!args.theta_star.empty())
    config.theta_star = Eigen::Map<const Eigen::VectorXd>(args.theta_star.data(),
                                                          args.theta_star.size());

  const mkd::CoverageReport report = mkd::coverage_simulation(config);

  ordered_json reps = ordered_json::array();
  for (const mkd::ReplicateOutcome& rep : report.per_replicate) {
    ordered_json r;
    r["theta_n"] = to_json(rep.theta_n);
    r["covered"] = rep.covered;
    r["residual"] = to_json(rep.residual);
    reps.push_back(r);
  }

  ordered_json result;
  result["schema"] = kSchema;
  result["command"] = "coverage";
  result["scenario"] = report.scenario;
  result["n"] = static_cast<std::int64_t>(report.n);
  result["replicates"] = report.replicates;
  result["gamma"] = report.gamma;
  result["seed"] = report.seed;
  result["theta_star"] = to_json(report.theta_star);
  result["coverage"] = report.coverage;
  result["mean_theta"] = to_json(report.mean_theta);
  result["ks_distance"] = report.ks_distance;
  result["variance_caution"] = report.variance_caution;
  result["per_replicate"] = reps;
  ordered_json cfg;
  cfg["scenario"] = args.scenario;
  cfg["n"] = args.n;
  cfg["replicates"] = args.replicates;
  cfg["gamma"] = args.gamma;
  cfg["seed"] = args.seed;
  cfg["dim"] = args.dim;
  cfg["theta_star"] = to_json(report.theta_star);
  if (args.scenario == "ksd-gaussian-natparams") {
    cfg["lengthscale"] = args.lengthscale;
    cfg["jitter"] = kJitterScale;
  }
  cfg["threads"] = mkd::max_threads();
  result["resolved_config"] = cfg;

  std::ostringstream summary;
  summary << "scenario      " << report.scenario << "\n"
          << "n             " << report.n << "\n"
          << "replicates    " << report.replicates << "\n"
          << "level         " << format_double(report.gamma) << "\n"
          << "coverage      " << format_double(report.coverage) << "\n"
          << "ks distance   " << format_double(report.ks_distance) << "\n"
          << "mean theta_n  " << format_vector(report.mean_theta) << "\n";
  if (report.variance_caution)
    summary << "caution: p^2 > n/10; plug-in variance may be unreliable\n";
  emit(result, args.out_path, summary.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minimum kernel discrepancy estimation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "",
                 "read options from a file (same keys as the flags; "
                 "command-line values override)");

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all available cores)")
      ->capture_default_str();

  MmdArgs mmd_args;
  CLI::App* mmd = app.add_subcommand("mmd", "discrepancy between two samples");
  mmd->add_option("--x", mmd_args.x_path, "first sample (CSV or JSON)")->required();
  mmd->add_option("--y", mmd_args.y_path, "second sample (CSV or JSON)")->required();
  mmd->add_flag("--csv-header", mmd_args.csv_header, "CSV inputs have a header row");
  add_kernel_flags(mmd, mmd_args.kernel, true);
  mmd->add_option("--kind", mmd_args.kind, "estimator kind")
      ->check(CLI::IsMember({"V", "U"}))
      ->capture_default_str();
  mmd->add_option("--seed", mmd_args.seed, "seed for features and median heuristic")
      ->capture_default_str();
  mmd->add_option("--out", mmd_args.out_path, "write JSON here instead of stdout");

  KsdArgs ksd_args;
  CLI::App* ksd = app.add_subcommand("ksd", "score discrepancy of a sample to a model");
  ksd->add_option("--data", ksd_args.data_path, "sample (CSV or JSON)")->required();
  ksd->add_flag("--csv-header", ksd_args.csv_header, "CSV inputs have a header row");
  ksd->add_option("--model", ksd_args.model, "exponential-family model")
      ->check(CLI::IsMember({"gaussian-natparams", "gaussian-location"}))
      ->capture_default_str();
  ksd->add_option("--theta", ksd_args.theta, "parameter values, comma-separated")
      ->delimiter(',')
      ->required();
  add_kernel_flags(ksd, ksd_args.kernel, false);
  ksd->add_option("--kind", ksd_args.kind, "estimator kind")
      ->check(CLI::IsMember({"V", "U"}))
      ->capture_default_str();
  ksd->add_option("--seed", ksd_args.seed, "seed for the median heuristic")
      ->capture_default_str();
  ksd->add_option("--out", ksd_args.out_path, "write JSON here instead of stdout");

  EstimateArgs est_args;
  CLI::App* est = app.add_subcommand("estimate", "fit a model by minimum discrepancy");
  est->add_option("--data", est_args.data_path, "sample (CSV or JSON)")->required();
  est->add_flag("--csv-header", est_args.csv_header, "CSV inputs have a header row");
  est->add_option("--method", est_args.method, "estimation method")
      ->check(CLI::IsMember({"gmm", "ksd-expfam", "mmd-pushforward"}))
      ->required();
  CLI::Option* model_opt =
      est->add_option("--model", est_args.model,
                      "model: gaussian-natparams, gaussian-location, or "
                      "location-pushforward (default depends on --method)");
  CLI::Option* features_opt =
      est->add_option("--features", est_args.features,
                      "feature map for --method gmm: identity or rff")
          ->capture_default_str();
  add_kernel_flags(est, est_args.kernel, false);
  CLI::Option* theta0_opt =
      est->add_option("--theta0", est_args.theta0,
                      "start point for --method mmd-pushforward, comma-separated "
                      "(default: sample mean)")
          ->delimiter(',');
  est->add_option("--gamma", est_args.gamma, "confidence level for the intervals")
      ->capture_default_str();
  est->add_option("--tol-x", est_args.tol_x, "optimizer point tolerance")
      ->capture_default_str();
  est->add_option("--tol-f", est_args.tol_f, "optimizer value tolerance")
      ->capture_default_str();
  est->add_option("--max-iter", est_args.max_iter,
                  "optimizer iteration budget (0 = 2000 per dimension)")
      ->capture_default_str();
  est->add_option("--restarts", est_args.restarts, "seeded optimizer restarts")
      ->capture_default_str();
  est->add_option("--model-samples", est_args.model_samples,
                  "model draws m for --method mmd-pushforward (0 = max(n, 1024))")
      ->capture_default_str();
  est->add_option("--seed", est_args.seed, "seed for draws, features, restarts")
      ->capture_default_str();
  est->add_option("--out", est_args.out_path, "write JSON here instead of stdout");

  WitnessArgs wit_args;
  CLI::App* wit = app.add_subcommand("witness", "evaluate the witness function");
  wit->add_option("--x", wit_args.x_path, "first sample (CSV or JSON)")->required();
  wit->add_option("--y", wit_args.y_path, "second sample (CSV or JSON)")->required();
  wit->add_option("--points", wit_args.points_path, "evaluation points (CSV or JSON)")
      ->required();
  wit->add_flag("--csv-header", wit_args.csv_header, "CSV inputs have a header row");
  add_kernel_flags(wit, wit_args.kernel, true);
  wit->add_option("--seed", wit_args.seed, "seed for features and median heuristic")
      ->capture_default_str();
  wit->add_option("--out", wit_args.out_path, "write JSON here instead of stdout");

  CoverageArgs cov_args;
  CLI::App* cov = app.add_subcommand("coverage", "confidence-set coverage study");
  cov->add_option("--scenario", cov_args.scenario,
                  "gmm-gaussian-mean or ksd-gaussian-natparams")
      ->required();
  cov->add_option("--n", cov_args.n, "sample size per replicate")
      ->capture_default_str();
  cov->add_option("--replicates", cov_args.replicates, "number of replicates")
      ->capture_default_str();
  cov->add_option("--gamma", cov_args.gamma, "confidence level")
      ->capture_default_str();
  cov->add_option("--seed", cov_args.seed, "base seed; replicate r adds r+1")
      ->capture_default_str();
  cov->add_option("--dim", cov_args.dim, "data dimension (gmm scenario)")
      ->capture_default_str();
  cov->add_option("--theta-star", cov_args.theta_star,
                  "true parameter, comma-separated (default: scenario default)")
      ->delimiter(',');
  cov->add_option("--lengthscale", cov_args.lengthscale,
                  "kernel lengthscale (ksd scenario)")
      ->capture_default_str();
  cov->add_option("--out", cov_args.out_path, "write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    app.exit(e);
    return 3;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (threads < 0) throw mkd::DomainError("--threads: must be >= 0");
    if (threads > 0) mkd::set_max_threads(threads);
    est_args.model_given = model_opt->count() > 0;
    est_args.features_given = features_opt->count() > 0;
    est_args.theta0_given = theta0_opt->count() > 0;

    if (mmd->parsed()) run_mmd(mmd_args);
    if (ksd->parsed()) run_ksd(ksd_args);
    if (est->parsed()) run_estimate(est_args);
    if (wit->parsed()) run_witness(wit_args);
    if (cov->parsed()) run_coverage(cov_args);
    return 0;
  } catch (const mkd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mkd::SingularError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mkd::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mkd::DegenerateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mkd::ScoreError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mkd::Error& e) {
    // Parse, shape, empty, dimension, domain, model-kind: validation.
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
