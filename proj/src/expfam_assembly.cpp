#include "mkd/detail/expfam_assembly.hpp"

#include <cmath>
#include <variant>
#include <vector>

#include "mkd/errors.hpp"
#include "mkd/parallel.hpp"

namespace mkd::detail {

namespace {

constexpr std::size_t kRowBlock = 128;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Scalar-argument derivative evaluators for the 1-d fast path.

struct RbfDeriv1 {
  double l2inv;  // 1 / lengthscale^2
  void operator()(double x, double y, double& c, double& gx, double& gy,
                  double& div) const {
    const double diff = x - y;
    const double s = diff * diff;
    c = std::exp(-0.5 * s * l2inv);
    gy = diff * l2inv * c;
    gx = -gy;
    div = (l2inv - s * l2inv * l2inv) * c;
  }
};

struct ImqDeriv1 {
  double g2inv;  // 1 / scale^2
  double b;
  void operator()(double x, double y, double& c, double& gx, double& gy,
                  double& div) const {
    const double diff = x - y;
    const double s = diff * diff;
    const double u = 1.0 + s * g2inv;
    const double u_b1 = std::pow(u, -b - 1.0);
    c = u_b1 * u;
    const double u_b2 = u_b1 / u;
    gy = 2.0 * b * g2inv * diff * u_b1;
    gx = -gy;
    div = 2.0 * b * g2inv * u_b1 - 4.0 * b * (b + 1.0) * g2inv * g2inv * s * u_b2;
  }
};

struct RowCache {
  std::vector<Eigen::MatrixXd> grad_t;  // d x p per row
  SampleMatrix grad_b;                  // n x d
};

RowCache build_row_cache(const ExponentialFamily& fam, const Dataset& xs) {
  if (xs.cols() != fam.data_dim)
    throw DimensionError("sample has dimension " + std::to_string(xs.cols()) +
                         ", model expects " + std::to_string(fam.data_dim));
  const Eigen::Index n = xs.rows();
  RowCache cache;
  cache.grad_t.reserve(static_cast<std::size_t>(n));
  cache.grad_b.resize(n, fam.data_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd t = fam.grad_t(xs.row(i));
    if (t.rows() != fam.data_dim || t.cols() != fam.param_dim)
      throw ScoreError("sufficient-statistic gradient has wrong shape");
    if (!t.allFinite())
      throw ScoreError("sufficient-statistic gradient is not finite");
    Eigen::VectorXd gb = fam.grad_b(xs.row(i));
    if (gb.size() != fam.data_dim || !gb.allFinite())
      throw ScoreError("base-term gradient is invalid");
    cache.grad_t.push_back(std::move(t));
    cache.grad_b.row(i) = gb.transpose();
  }
  return cache;
}

// 1-d fast path: grad_t rows are p-vectors, grad_b entries scalars.
template <class DerivFn>
QuadraticTerms assemble_1d(const DerivFn& kfn, const Dataset& xs,
                           const SampleMatrix& tmat, const Eigen::VectorXd& bvec,
                           bool want_linear) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const Eigen::Index p = tmat.cols();
  const double* xv = xs.samples().data();
  const double* tv = tmat.data();

  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<Eigen::MatrixXd> g_part(nblocks);
  std::vector<Eigen::VectorXd> b_part(nblocks);
  std::vector<double> c_part(nblocks, 0.0);

  parallel_blocks(n, kRowBlock, [&](std::size_t blk, std::size_t begin,
                                    std::size_t end) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd B = Eigen::VectorXd::Zero(p);
    KahanSum C0;
    double c, gx, gy, div;
    for (std::size_t i = begin; i < end; ++i) {
      const double xi = xv[i];
      const double bi = bvec[static_cast<Eigen::Index>(i)];
      const double* ti = tv + i * static_cast<std::size_t>(p);
      for (std::size_t j = 0; j < i; ++j) {
        const double* tj = tv + j * static_cast<std::size_t>(p);
        kfn(xv[j], xi, c, gx, gy, div);
        for (Eigen::Index r = 0; r < p; ++r)
          for (Eigen::Index s = 0; s < p; ++s)
            G(r, s) += c * (tj[r] * ti[s] + ti[r] * tj[s]);
        if (want_linear) {
          const double bj = bvec[static_cast<Eigen::Index>(j)];
          for (Eigen::Index r = 0; r < p; ++r)
            B[r] += ti[r] * gx + tj[r] * gy + c * (tj[r] * bi + ti[r] * bj);
          C0.add(2.0 * (div + bj * gy + bi * gx + c * bj * bi));
        }
      }
      kfn(xi, xi, c, gx, gy, div);
      for (Eigen::Index r = 0; r < p; ++r)
        for (Eigen::Index s = 0; s < p; ++s) G(r, s) += c * ti[r] * ti[s];
      if (want_linear) {
        for (Eigen::Index r = 0; r < p; ++r)
          B[r] += 0.5 * (ti[r] * gx + ti[r] * gy + 2.0 * c * ti[r] * bi);
        C0.add(div + bi * gy + bi * gx + c * bi * bi);
      }
    }
    g_part[blk] = std::move(G);
    b_part[blk] = std::move(B);
    c_part[blk] = C0.value();
  });

  QuadraticTerms out;
  KahanMatrix g_total(p, p);
  KahanVector b_total(p);
  KahanSum c_total;
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    g_total.add(g_part[blk]);
    if (want_linear) {
      b_total.add(b_part[blk]);
      c_total.add(c_part[blk]);
    }
  }
  const double dn = static_cast<double>(n);
  out.gamma = g_total.value() / (dn * dn);
  if (want_linear) {
    out.beta = b_total.value() / (dn * dn);
    out.c0 = c_total.value() / (dn * dn);
  }
  return out;
}

// General-dimension path with preallocated Eigen buffers per block.
QuadraticTerms assemble_general(const SmoothKernel& kernel, const Dataset& xs,
                                const RowCache& cache, bool want_linear) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const Eigen::Index p = cache.grad_t.front().cols();

  const std::size_t nblocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<Eigen::MatrixXd> g_part(nblocks);
  std::vector<Eigen::VectorXd> b_part(nblocks);
  std::vector<double> c_part(nblocks, 0.0);

  parallel_blocks(n, kRowBlock, [&](std::size_t blk, std::size_t begin,
                                    std::size_t end) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd B = Eigen::VectorXd::Zero(p);
    KahanSum C0;
    Eigen::MatrixXd A(p, p);
    Eigen::VectorXd lvec(p);
    SmoothKernelDerivatives c;
    c.resize(xs.cols());
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const auto& ti = cache.grad_t[i];
      const auto bi = cache.grad_b.row(ii).transpose();
      for (std::size_t j = 0; j < i; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        const auto& tj = cache.grad_t[j];
        const auto bj = cache.grad_b.row(jj).transpose();
        eval_with_derivatives(kernel, xs.row(jj), xs.row(ii), c);
        A.noalias() = tj.transpose() * ti;
        G += c.value * (A + A.transpose());
        if (want_linear) {
          lvec.noalias() = ti.transpose() * c.grad_x;
          lvec.noalias() += tj.transpose() * c.grad_y;
          lvec.noalias() += c.value * (tj.transpose() * bi);
          lvec.noalias() += c.value * (ti.transpose() * bj);
          B += lvec;
          C0.add(2.0 * (c.div_xy + bj.dot(c.grad_y) + bi.dot(c.grad_x) +
                        c.value * bj.dot(bi)));
        }
      }
      eval_with_derivatives(kernel, xs.row(ii), xs.row(ii), c);
      A.noalias() = ti.transpose() * ti;
      G += c.value * A;
      if (want_linear) {
        lvec.noalias() = ti.transpose() * c.grad_x;
        lvec.noalias() += ti.transpose() * c.grad_y;
        lvec.noalias() += 2.0 * c.value * (ti.transpose() * bi);
        B += 0.5 * lvec;
        C0.add(c.div_xy + bi.dot(c.grad_y) + bi.dot(c.grad_x) +
               c.value * bi.squaredNorm());
      }
    }
    g_part[blk] = std::move(G);
    b_part[blk] = std::move(B);
    c_part[blk] = C0.value();
  });

  QuadraticTerms out;
  KahanMatrix g_total(p, p);
  KahanVector b_total(p);
  KahanSum c_total;
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    g_total.add(g_part[blk]);
    if (want_linear) {
      b_total.add(b_part[blk]);
      c_total.add(c_part[blk]);
    }
  }
  const double dn = static_cast<double>(n);
  out.gamma = g_total.value() / (dn * dn);
  if (want_linear) {
    out.beta = b_total.value() / (dn * dn);
    out.c0 = c_total.value() / (dn * dn);
  }
  return out;
}

}  // namespace

QuadraticTerms assemble_quadratic(const SmoothKernel& c, const ExponentialFamily& fam,
                                  const Dataset& xs, bool want_linear_terms) {
  const RowCache cache = build_row_cache(fam, xs);
  if (fam.data_dim == 1) {
    // Flatten the 1 x p gradient rows into one contiguous matrix.
    const Eigen::Index n = xs.rows();
    const Eigen::Index p = fam.param_dim;
    SampleMatrix tmat(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      tmat.row(i) = cache.grad_t[static_cast<std::size_t>(i)].row(0);
    const Eigen::VectorXd bvec = cache.grad_b.col(0);
    return std::visit(
        overloaded{[&](const GaussianRbf& k) {
                     const RbfDeriv1 f{1.0 / (k.lengthscale * k.lengthscale)};
                     return assemble_1d(f, xs, tmat, bvec, want_linear_terms);
                   },
                   [&](const InverseMultiquadric& k) {
                     const ImqDeriv1 f{1.0 / (k.scale * k.scale), k.exponent};
                     return assemble_1d(f, xs, tmat, bvec, want_linear_terms);
                   }},
        c);
  }
  return assemble_general(c, xs, cache, want_linear_terms);
}

Eigen::MatrixXd dtheta_row_means(const SmoothKernel& c, const ExponentialFamily& fam,
                                 const Dataset& xs, const ParamVector& theta) {
  const RowCache cache = build_row_cache(fam, xs);
  if (theta.size() != fam.param_dim)
    throw DimensionError("parameter has dimension " + std::to_string(theta.size()) +
                         ", model expects " + std::to_string(fam.param_dim));
  const Eigen::Index n = xs.rows();
  const Eigen::Index p = fam.param_dim;
  const Eigen::Index d = fam.data_dim;

  // Scores at theta, one row each.
  SampleMatrix scores(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd s =
        cache.grad_t[static_cast<std::size_t>(i)] * theta +
        cache.grad_b.row(i).transpose();
    if (!s.allFinite()) throw ScoreError("score is not finite");
    scores.row(i) = s.transpose();
  }

  Eigen::MatrixXd out(n, p);

  if (d == 1) {
    SampleMatrix tmat(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      tmat.row(i) = cache.grad_t[static_cast<std::size_t>(i)].row(0);
    const double* xv = xs.samples().data();
    const double* tv = tmat.data();
    const double* uv = scores.data();
    const std::size_t un = static_cast<std::size_t>(n);
    const std::size_t up = static_cast<std::size_t>(p);

    auto run_rows = [&](const auto& kfn) {
      parallel_blocks(un, kRowBlock, [&](std::size_t, std::size_t begin,
                                         std::size_t end) {
        std::vector<double> acc(up);
        double cv, gx, gy, div;
        (void)div;
        for (std::size_t i = begin; i < end; ++i) {
          std::fill(acc.begin(), acc.end(), 0.0);
          const double xi = xv[i];
          const double ui = uv[i];
          const double* ti = tv + i * up;
          for (std::size_t j = 0; j < un; ++j) {
            const double* tj = tv + j * up;
            kfn(xi, xv[j], cv, gx, gy, div);
            const double uj = uv[j];
            for (std::size_t r = 0; r < up; ++r)
              acc[r] += tj[r] * gx + ti[r] * gy + cv * (ti[r] * uj + tj[r] * ui);
          }
          for (std::size_t r = 0; r < up; ++r)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
                acc[r] / static_cast<double>(n);
        }
      });
    };
    std::visit(overloaded{[&](const GaussianRbf& k) {
                            run_rows(RbfDeriv1{1.0 / (k.lengthscale * k.lengthscale)});
                          },
                          [&](const InverseMultiquadric& k) {
                            run_rows(ImqDeriv1{1.0 / (k.scale * k.scale), k.exponent});
                          }},
               c);
    return out;
  }

  const std::size_t un = static_cast<std::size_t>(n);
  parallel_blocks(un, kRowBlock, [&](std::size_t, std::size_t begin, std::size_t end) {
    Eigen::VectorXd acc(p);
    Eigen::VectorXd lvec(p);
    SmoothKernelDerivatives cd;
    cd.resize(d);
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const auto& ti = cache.grad_t[i];
      const auto ui = scores.row(ii).transpose();
      acc.setZero();
      for (std::size_t j = 0; j < un; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        const auto& tj = cache.grad_t[j];
        eval_with_derivatives(c, xs.row(ii), xs.row(jj), cd);
        lvec.noalias() = tj.transpose() * cd.grad_x;
        lvec.noalias() += ti.transpose() * cd.grad_y;
        lvec.noalias() += cd.value * (ti.transpose() * scores.row(jj).transpose());
        lvec.noalias() += cd.value * (tj.transpose() * ui);
        acc += lvec;
      }
      out.row(ii) = acc.transpose() / static_cast<double>(n);
    }
  });
  return out;
}

}  // namespace mkd::detail
