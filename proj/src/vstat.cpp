#include "mkd/vstat.hpp"

#include <vector>

#include "mkd/parallel.hpp"

namespace mkd {

namespace {

constexpr std::size_t kRowBlock = 64;

// Sum over unordered pairs i < j of 2 v(x_i, x_j), plus the diagonal sum
// when include_diag. Row blocks get independent accumulators merged in
// block order.
double pair_sum(const Dataset& xs, const ScalarBivariate& v, bool include_diag) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanSum> partial(nblocks);
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanSum acc;
    for (std::size_t i = begin; i < end; ++i) {
      const auto xi = xs.row(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < i; ++j)
        acc.add(2.0 * v(xs.row(static_cast<Eigen::Index>(j)), xi));
      if (include_diag) acc.add(v(xi, xi));
    }
    partial[b] = acc;
  });
  KahanSum total;
  for (const auto& p : partial) total.merge(p);
  return total.value();
}

}  // namespace

double v_statistic(const Dataset& xs, const ScalarBivariate& v) {
  const double n = static_cast<double>(xs.rows());
  return pair_sum(xs, v, true) / (n * n);
}

double u_statistic(const Dataset& xs, const ScalarBivariate& v) {
  if (xs.rows() < 2) throw ShapeError("off-diagonal statistic needs n >= 2");
  const double n = static_cast<double>(xs.rows());
  return pair_sum(xs, v, false) / (n * (n - 1.0));
}

double conditional_mean_variance(const Dataset& xs, const ScalarBivariate& v) {
  const Eigen::Index n = xs.rows();
  if (n < 2) throw ShapeError("conditional mean variance needs n >= 2");

  const std::size_t un = static_cast<std::size_t>(n);
  std::vector<KahanSum> row_sum(un);
  parallel_blocks(un, kRowBlock, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      KahanSum acc;
      const auto xi = xs.row(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < un; ++j)
        acc.add(v(xi, xs.row(static_cast<Eigen::Index>(j))));
      row_sum[i] = acc;
    }
  });

  const double dn = static_cast<double>(n);
  KahanSum mean_acc;
  for (const auto& r : row_sum) mean_acc.add(r.value() / dn);
  const double mean = mean_acc.value() / dn;

  KahanSum var_acc;
  for (const auto& r : row_sum) {
    const double dev = r.value() / dn - mean;
    var_acc.add(dev * dev);
  }
  return var_acc.value() / (dn - 1.0);
}

Eigen::VectorXd v_statistic_vector(const Dataset& xs, Eigen::Index p,
                                   const VectorBivariate& v) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanVector> partial(nblocks, KahanVector(p));
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanVector acc(p);
    Eigen::VectorXd buf(p);
    for (std::size_t i = begin; i < end; ++i) {
      const auto xi = xs.row(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < i; ++j) {
        v(xs.row(static_cast<Eigen::Index>(j)), xi, buf);
        buf *= 2.0;
        acc.add(buf);
      }
      v(xi, xi, buf);
      acc.add(buf);
    }
    partial[b] = acc;
  });
  KahanVector total(p);
  for (const auto& q : partial) total.merge(q);
  const double dn = static_cast<double>(n);
  return total.value() / (dn * dn);
}

Eigen::MatrixXd v_statistic_matrix(const Dataset& xs, Eigen::Index r, Eigen::Index c,
                                   const MatrixBivariate& v) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<KahanMatrix> partial(nblocks, KahanMatrix(r, c));
  parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
    KahanMatrix acc(r, c);
    Eigen::MatrixXd buf(r, c);
    for (std::size_t i = begin; i < end; ++i) {
      const auto xi = xs.row(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < i; ++j) {
        v(xs.row(static_cast<Eigen::Index>(j)), xi, buf);
        buf *= 2.0;
        acc.add(buf);
      }
      v(xi, xi, buf);
      acc.add(buf);
    }
    partial[b] = acc;
  });
  KahanMatrix total(r, c);
  for (const auto& q : partial) total.merge(q);
  const double dn = static_cast<double>(n);
  return total.value() / (dn * dn);
}

}  // namespace mkd
