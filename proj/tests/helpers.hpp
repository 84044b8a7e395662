#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mkd/dataset.hpp"

namespace testutil {

inline mkd::Dataset column(const std::vector<double>& values) {
  mkd::SampleMatrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    m(i, 0) = values[static_cast<std::size_t>(i)];
  return mkd::Dataset(std::move(m));
}

inline mkd::Dataset from_rows(const std::vector<std::vector<double>>& rows) {
  mkd::SampleMatrix m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return mkd::Dataset(std::move(m));
}

inline mkd::Dataset random_normal(Eigen::Index n, Eigen::Index d,
                                  std::mt19937_64& rng, double mean = 0.0,
                                  double sd = 1.0) {
  std::normal_distribution<double> normal(mean, sd);
  mkd::SampleMatrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal(rng);
  return mkd::Dataset(std::move(m));
}

/// Temp file that deletes itself; contents written at construction.
class TempFile {
 public:
  explicit TempFile(const std::string& contents, const std::string& suffix = ".csv") {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("mkd_test_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++) + suffix))
                .string();
    std::ofstream out(path_, std::ios::binary);
    out << contents;
  }
  TempFile(const TempFile&) = delete;
  ~TempFile() { std::remove(path_.c_str()); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace testutil
