#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace mkd {

/// Current worker-thread budget (>= 1).
int max_threads();

/// Set the worker-thread budget; 0 means "use hardware concurrency".
void set_max_threads(int n);

/// Runs fn(block_index, begin, end) for each fixed-size block of [0, count).
/// The block partition depends only on count and block_size, never on the
/// thread count, so per-block partial results merged in block order give
/// bit-identical totals for any --threads setting.
void parallel_blocks(
    std::size_t count, std::size_t block_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Neumaier-compensated scalar accumulator. Deterministic for a fixed
/// insertion order; merge() appends another accumulator's contribution.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }

  void merge(const KahanSum& other) {
    add(other.sum);
    comp += other.comp;
  }

  double value() const { return sum + comp; }
};

/// Elementwise compensated accumulator for fixed-size vectors.
class KahanVector {
 public:
  explicit KahanVector(Eigen::Index n)
      : sum_(Eigen::VectorXd::Zero(n)), comp_(Eigen::VectorXd::Zero(n)) {}

  void add(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const Eigen::ArrayXd t = sum_.array() + v.array();
    comp_ += ((sum_.array().abs() >= v.array().abs())
                  .select((sum_.array() - t) + v.array(),
                          (v.array() - t) + sum_.array()))
                 .matrix();
    sum_ = t.matrix();
  }

  void merge(const KahanVector& other) {
    add(other.sum_);
    comp_ += other.comp_;
  }

  Eigen::VectorXd value() const { return sum_ + comp_; }

 private:
  Eigen::VectorXd sum_;
  Eigen::VectorXd comp_;
};

/// Elementwise compensated accumulator for fixed-size matrices.
class KahanMatrix {
 public:
  KahanMatrix(Eigen::Index r, Eigen::Index c)
      : sum_(Eigen::MatrixXd::Zero(r, c)), comp_(Eigen::MatrixXd::Zero(r, c)) {}

  void add(const Eigen::Ref<const Eigen::MatrixXd>& v) {
    const Eigen::ArrayXXd t = sum_.array() + v.array();
    comp_ += ((sum_.array().abs() >= v.array().abs())
                  .select((sum_.array() - t) + v.array(),
                          (v.array() - t) + sum_.array()))
                 .matrix();
    sum_ = t.matrix();
  }

  void merge(const KahanMatrix& other) {
    add(other.sum_);
    comp_ += other.comp_;
  }

  Eigen::MatrixXd value() const { return sum_ + comp_; }

 private:
  Eigen::MatrixXd sum_;
  Eigen::MatrixXd comp_;
};

}  // namespace mkd
