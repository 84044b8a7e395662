#include "mkd/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

#include <json.hpp>

namespace mkd {

Dataset::Dataset(SampleMatrix samples) : samples_(std::move(samples)) {
  if (samples_.rows() == 0 || samples_.cols() == 0)
    throw EmptyError("dataset has no samples");
  if (!samples_.allFinite())
    throw DomainError("dataset contains NaN or infinite values");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_field(std::string_view field, long line_no, long col_no) {
  const std::string_view token = trim(field);
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || token.empty())
    throw ParseError("invalid numeric field '" + std::string(field) + "'",
                     line_no, col_no);
  if (!std::isfinite(value))
    throw ParseError("non-finite value '" + std::string(field) + "'", line_no,
                     col_no);
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    std::vector<double> fields;
    std::string_view rest(line);
    long col_no = 0;
    for (;;) {
      ++col_no;
      const std::size_t comma = rest.find(',');
      const std::string_view field =
          comma == std::string_view::npos ? rest : rest.substr(0, comma);
      fields.push_back(parse_field(field, line_no, col_no));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows.empty()) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw ShapeError("ragged CSV: line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(width));
    }
    rows.push_back(std::move(fields));
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  if (rows.empty()) throw EmptyError("no data rows in '" + path + "'");

  SampleMatrix m(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return Dataset(std::move(m));
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  char buf[64];
  const auto& m = ds.samples();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j > 0) out.put(',');
      out << buf;
    }
    out.put('\n');
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

Dataset load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0, 0);
  }
  if (!doc.is_array())
    throw ShapeError("JSON dataset must be an array of arrays");
  if (doc.empty()) throw EmptyError("JSON dataset has no rows");

  const std::size_t n = doc.size();
  std::size_t width = 0;
  SampleMatrix m;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = doc[i];
    if (!row.is_array())
      throw ShapeError("JSON row " + std::to_string(i + 1) + " is not an array");
    if (i == 0) {
      width = row.size();
      if (width == 0) throw EmptyError("JSON dataset has zero-width rows");
      m.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    } else if (row.size() != width) {
      throw ShapeError("JSON row " + std::to_string(i + 1) + " has " +
                       std::to_string(row.size()) + " entries, expected " +
                       std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const auto& cell = row[j];
      if (!cell.is_number())
        throw ParseError("non-numeric JSON entry", static_cast<long>(i + 1),
                         static_cast<long>(j + 1));
      const double v = cell.get<double>();
      if (!std::isfinite(v))
        throw ParseError("non-finite JSON entry", static_cast<long>(i + 1),
                         static_cast<long>(j + 1));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return Dataset(std::move(m));
}

std::vector<Dataset> split_replicates(const Dataset& ds, Eigen::Index replicates) {
  if (replicates < 1)
    throw ShapeError("replicates must be >= 1");
  if (ds.rows() % replicates != 0)
    throw ShapeError("replicates (" + std::to_string(replicates) +
                     ") does not divide sample count (" +
                     std::to_string(ds.rows()) + ")");
  const Eigen::Index block = ds.rows() / replicates;
  std::vector<Dataset> out;
  out.reserve(static_cast<std::size_t>(replicates));
  for (Eigen::Index r = 0; r < replicates; ++r)
    out.emplace_back(SampleMatrix(ds.samples().middleRows(r * block, block)));
  return out;
}

}  // namespace mkd
