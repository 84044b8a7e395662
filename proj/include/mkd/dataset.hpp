#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkd/errors.hpp"

namespace mkd {

/// Row-major sample storage: one row per observation, one column per
/// coordinate. Rows are contiguous in memory.
using SampleMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Immutable container for an i.i.d. sample. Every value is finite;
/// NaN/Inf are rejected at construction, so downstream numeric code never
/// re-checks. Cheap to copy-share via Eigen's internal heap buffer move,
/// safe to read from many threads.
class Dataset {
 public:
  /// Throws EmptyError for zero rows or columns, DomainError on NaN/Inf.
  explicit Dataset(SampleMatrix samples);

  Eigen::Index rows() const { return samples_.rows(); }
  Eigen::Index cols() const { return samples_.cols(); }

  const SampleMatrix& samples() const { return samples_; }

  /// View of row i as a column vector (no copy; unit inner stride).
  Eigen::Ref<const Eigen::VectorXd> row(Eigen::Index i) const {
    return samples_.row(i).transpose();
  }

  /// Pointer to the first element of row i (rows are contiguous).
  const double* row_data(Eigen::Index i) const {
    return samples_.data() + i * samples_.cols();
  }

 private:
  SampleMatrix samples_;
};

/// Reads a CSV of doubles: comma-separated, '.' decimal point, no quoting,
/// optional single header line skipped when has_header is true.
/// Throws IoError (unreadable file), ParseError (non-numeric or non-finite
/// field; 1-based file line and field index), ShapeError (ragged rows),
/// EmptyError (no data rows).
Dataset load_csv(const std::string& path, bool has_header = false);

/// Writes samples as headerless CSV with 17 significant digits, enough for
/// an exact double round-trip through load_csv.
void save_csv(const Dataset& ds, const std::string& path);

/// Reads a JSON array of equal-length arrays of finite numbers.
Dataset load_json(const std::string& path);

/// Splits the rows into `replicates` contiguous equal blocks, preserving
/// order. Throws ShapeError when replicates < 1 or does not divide rows().
std::vector<Dataset> split_replicates(const Dataset& ds, Eigen::Index replicates);

}  // namespace mkd
