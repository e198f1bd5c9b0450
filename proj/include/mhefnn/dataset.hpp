#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mhefnn/errors.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/rng.hpp"

namespace mhefnn {

struct Dataset {
  Matrix inputs;    // N x m, standardized with training-split statistics
  Vector targets;   // N, raw units
  std::vector<int> train, test;
  std::vector<std::string> feature_names;
  std::string target_name;
  Vector feature_mean, feature_std;

  Matrix train_inputs() const { return inputs(train, Eigen::all); }
  Vector train_targets() const { return targets(train); }
  Matrix test_inputs() const { return inputs(test, Eigen::all); }
  Vector test_targets() const { return targets(test); }
};

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Matrix data;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = line.find(delim, start);
    out.push_back(trim(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& v) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(v);
}

inline bool all_numeric(const std::vector<std::string_view>& cells) {
  double v;
  for (auto c : cells)
    if (!parse_double(c, v)) return false;
  return true;
}

}  // namespace detail

// Reads a numeric CSV. The delimiter is ';' when the first line has one,
// otherwise ','. A non-numeric first line is taken as the header.
inline CsvTable read_csv_table(const std::string& path, bool header_required) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  long lineno = 0;
  char delim = ',';
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    if (first) delim = line.find(';') != std::string::npos ? ';' : ',';
    const auto cells = detail::split(line, delim);
    if (first) {
      first = false;
      width = cells.size();
      if (header_required || !detail::all_numeric(cells)) {
        for (auto c : cells) t.header.emplace_back(c);
        continue;
      }
    }
    if (cells.size() != width)
      throw MalformedCsv("expected " + std::to_string(width) + " fields, found " + std::to_string(cells.size()),
                         lineno);
    std::vector<double> r(width);
    for (std::size_t j = 0; j < width; ++j)
      if (!detail::parse_double(cells[j], r[j]))
        throw MalformedCsv("field " + std::to_string(j + 1) + " ('" + std::string(cells[j]) + "') is not a number",
                           lineno);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw MalformedCsv("no data rows", lineno);
  t.data.resize(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) t.data(i, j) = rows[i][j];
  return t;
}

// Seeded shuffle, floor((1 - test_fraction) N) training rows. Features are
// standardized with training-split mean and population standard deviation.
inline Dataset load_csv(const std::string& path, const std::string& target_column, std::uint64_t seed,
                        double test_fraction = 0.1) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must lie in (0, 1)");
  const CsvTable t = read_csv_table(path, true);
  int target = -1;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (t.header[j] == target_column) target = int(j);
  if (target < 0) throw MissingColumn("column '" + target_column + "' not found in '" + path + "'");
  const Index N = t.data.rows(), p = t.data.cols();
  if (p < 2) throw MalformedCsv("need at least one feature column besides the target", 1);

  Dataset d;
  d.target_name = target_column;
  std::vector<int> feat;
  for (Index j = 0; j < p; ++j)
    if (j != target) {
      feat.push_back(int(j));
      d.feature_names.push_back(t.header[j]);
    }
  d.inputs = t.data(Eigen::all, feat);
  d.targets = t.data.col(target);

  std::vector<int> idx(N);
  for (Index i = 0; i < N; ++i) idx[i] = int(i);
  Rng rng(seed);
  rng.shuffle(idx);
  const Index n_train = Index(std::floor(double(N) * (1.0 - test_fraction) + 1e-9));
  if (n_train < 1 || n_train >= N) throw InvalidArgument("split leaves an empty train or test set");
  d.train.assign(idx.begin(), idx.begin() + n_train);
  d.test.assign(idx.begin() + n_train, idx.end());

  const Matrix Xtr = d.inputs(d.train, Eigen::all);
  d.feature_mean = Xtr.colwise().mean().transpose();
  d.feature_std.resize(Xtr.cols());
  for (Index j = 0; j < Xtr.cols(); ++j) {
    const double s = std::sqrt((Xtr.col(j).array() - d.feature_mean(j)).square().mean());
    d.feature_std(j) = s > 0.0 ? s : 1.0;
  }
  d.inputs = (d.inputs.rowwise() - d.feature_mean.transpose()).array().rowwise() / d.feature_std.transpose().array();
  return d;
}

// Weights file: row = input node, column = hidden node, optional header.
inline Matrix read_weights_csv(const std::string& path) { return read_csv_table(path, false).data; }

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_csv(std::ostream& os, const Eigen::Ref<const Matrix>& M) {
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) os << (j ? "," : "") << format_double(M(i, j));
    os << '\n';
  }
}

}  // namespace mhefnn
