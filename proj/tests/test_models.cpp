#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mkd/models.hpp"

namespace {

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd x(1);
  x << v;
  return x;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd x(2);
  x << a, b;
  return x;
}

}  // namespace

TEST_CASE("box membership and projection") {
  mkd::ThetaBox box;
  box.lo = vec2(-1.0, 0.0);
  box.hi = vec2(1.0, 2.0);
  CHECK(box.contains(vec2(0.0, 1.0)));
  CHECK(box.contains(vec2(-1.0, 2.0)));  // boundary counts
  CHECK_FALSE(box.contains(vec2(1.5, 1.0)));
  CHECK(box.project(vec2(3.0, -4.0)) == vec2(1.0, 0.0));
  CHECK(box.project(vec2(0.3, 0.7)) == vec2(0.3, 0.7));

  const mkd::ThetaBox free = mkd::ThetaBox::unbounded(3);
  CHECK(free.dim() == 3);
  CHECK(free.contains(Eigen::VectorXd::Constant(3, 1e9)));
}

TEST_CASE("unit-variance family score is theta minus x") {
  const mkd::ExponentialFamily fam = mkd::gaussian_location_instance(1);
  CHECK(mkd::expfam_score(fam, vec1(1.0), vec1(0.0))(0) == -1.0);
  CHECK(mkd::expfam_score(fam, vec1(0.5), vec1(2.0))(0) == 1.5);
  CHECK_THROWS_AS(mkd::expfam_score(fam, vec1(0.0), vec2(0.0, 1.0)),
                  mkd::DimensionError);
}

TEST_CASE("natural-form family score matches the Gaussian derivative") {
  const mkd::ExponentialFamily fam = mkd::gaussian_location_scale_instance(1);
  // theta = (0, 1) is the standard normal: score -x.
  CHECK(mkd::expfam_score(fam, vec1(0.7), vec2(0.0, 1.0))(0) ==
        doctest::Approx(-0.7).epsilon(1e-15));
  // General member: d/dx log N(x; mu, s^2) = -(x - mu)/s^2.
  const double mu = 1.5, var = 4.0;
  const mkd::ParamVector theta =
      mkd::gaussian_natural_from_moments(vec1(mu), vec1(var));
  for (const double x : {-2.0, 0.0, 3.25}) {
    CHECK(mkd::expfam_score(fam, vec1(x), theta)(0) ==
          doctest::Approx(-(x - mu) / var).epsilon(1e-14));
  }
}

TEST_CASE("statistic and base gradients agree with finite differences") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> normal;
  const double h = 1e-6;
  for (const auto& fam : {mkd::gaussian_location_scale_instance(2),
                          mkd::gaussian_location_instance(3)}) {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd x(fam.data_dim);
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);

      const Eigen::MatrixXd gt = fam.grad_t(x);
      REQUIRE(gt.rows() == fam.data_dim);
      REQUIRE(gt.cols() == fam.param_dim);
      const Eigen::VectorXd gb = fam.grad_b(x);
      for (Eigen::Index a = 0; a < fam.data_dim; ++a) {
        Eigen::VectorXd xp = x, xm = x;
        xp(a) += h;
        xm(a) -= h;
        const Eigen::VectorXd fd_t = (fam.t(xp) - fam.t(xm)) / (2 * h);
        for (Eigen::Index j = 0; j < fam.param_dim; ++j) {
          const double scale = std::max(1.0, std::abs(fd_t(j)));
          CHECK(std::abs(gt(a, j) - fd_t(j)) / scale < 1e-5);
        }
        const double fd_b = (fam.b(xp) - fam.b(xm)) / (2 * h);
        const double scale = std::max(1.0, std::abs(fd_b));
        CHECK(std::abs(gb(a) - fd_b) / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("natural and moment parametrizations invert each other") {
  const Eigen::VectorXd mean = vec2(1.0, -3.0);
  const Eigen::VectorXd variance = vec2(4.0, 0.25);
  const mkd::ParamVector theta = mkd::gaussian_natural_from_moments(mean, variance);
  REQUIRE(theta.size() == 4);
  CHECK(theta.head(2) == vec2(0.25, -12.0));  // mu / s^2
  CHECK(theta.tail(2) == vec2(0.25, 4.0));    // 1 / s^2
  Eigen::VectorXd mean_back, var_back;
  mkd::gaussian_moments_from_natural(theta, mean_back, var_back);
  CHECK((mean_back - mean).norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((var_back - variance).norm() == doctest::Approx(0.0).epsilon(1e-14));

  CHECK_THROWS_AS(mkd::gaussian_natural_from_moments(mean, vec2(1.0, 0.0)),
                  mkd::DomainError);
  Eigen::VectorXd bad(4);
  bad << 0.0, 0.0, 1.0, -1.0;
  Eigen::VectorXd m, v;
  CHECK_THROWS_AS(mkd::gaussian_moments_from_natural(bad, m, v), mkd::DomainError);
  CHECK_THROWS_AS(mkd::gaussian_moments_from_natural(vec1(1.0), m, v),
                  mkd::DimensionError);
}

TEST_CASE("family samplers hit the requested moments") {
  const Eigen::Index n = 100000;

  const mkd::ExponentialFamily nat = mkd::gaussian_location_scale_instance(1);
  const mkd::ParamVector theta =
      mkd::gaussian_natural_from_moments(vec1(2.0), vec1(0.25));
  const mkd::Dataset draws = nat.sampler(theta, n, 77);
  REQUIRE(draws.rows() == n);
  const double mean = draws.samples().col(0).mean();
  const double var =
      (draws.samples().col(0).array() - mean).square().sum() / double(n - 1);
  CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
  CHECK(var / 0.25 == doctest::Approx(1.0).epsilon(0.04));

  const mkd::ExponentialFamily loc = mkd::gaussian_location_instance(2);
  const mkd::Dataset draws2 = loc.sampler(vec2(-1.0, 3.0), n, 78);
  CHECK(draws2.samples().col(0).mean() == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(draws2.samples().col(1).mean() == doctest::Approx(3.0).epsilon(0.01));

  // Sampling the natural family needs a positive precision.
  CHECK_THROWS_AS(nat.sampler(vec2(0.0, -1.0), 10, 0), mkd::DomainError);
}

TEST_CASE("samplers are reproducible for a fixed seed") {
  const mkd::ExponentialFamily fam = mkd::gaussian_location_instance(1);
  const mkd::Dataset a = fam.sampler(vec1(0.0), 50, 123);
  const mkd::Dataset b = fam.sampler(vec1(0.0), 50, 123);
  const mkd::Dataset c = fam.sampler(vec1(0.0), 50, 124);
  CHECK(a.samples() == b.samples());
  CHECK(a.samples() != c.samples());
}

TEST_CASE("simulator model draws stay near the pushed-forward mean") {
  const mkd::PushforwardModel model = mkd::location_pushforward_instance(2);
  const Eigen::Index m = 4096;
  const mkd::ParamVector theta = vec2(5.0, -2.0);
  const mkd::Dataset ys = mkd::pushforward_sample(model, theta, m, 3);
  REQUIRE(ys.rows() == m);
  REQUIRE(ys.cols() == 2);
  const double tol = 4.0 / std::sqrt(static_cast<double>(m));
  CHECK(std::abs(ys.samples().col(0).mean() - 5.0) < tol);
  CHECK(std::abs(ys.samples().col(1).mean() + 2.0) < tol);
}

TEST_CASE("common random numbers make the location map an exact shift") {
  const mkd::PushforwardModel model = mkd::location_pushforward_instance(1);
  const mkd::Dataset at0 = mkd::pushforward_sample(model, vec1(0.0), 32, 9);
  const mkd::Dataset at3 = mkd::pushforward_sample(model, vec1(3.0), 32, 9);
  for (Eigen::Index i = 0; i < 32; ++i)
    CHECK(at3.samples()(i, 0) - at0.samples()(i, 0) == 3.0);
}

TEST_CASE("simulator sampling validates its inputs") {
  mkd::PushforwardModel model = mkd::location_pushforward_instance(1);
  CHECK_NOTHROW(mkd::pushforward_sample(model, vec1(0.0), 1, 0));
  CHECK_THROWS_AS(mkd::pushforward_sample(model, vec2(0.0, 1.0), 4, 0),
                  mkd::DimensionError);
  CHECK_THROWS_AS(mkd::pushforward_sample(model, vec1(0.0), 0, 0),
                  mkd::DomainError);
  model.domain.lo = vec1(-1.0);
  model.domain.hi = vec1(1.0);
  CHECK_THROWS_AS(mkd::pushforward_sample(model, vec1(2.0), 4, 0),
                  mkd::DomainError);
}
