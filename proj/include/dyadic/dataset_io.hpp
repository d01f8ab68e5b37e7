#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"

namespace dyadic {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("cannot parse number '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

inline long parse_integer(std::string_view s, std::string_view what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("cannot parse integer '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Companion file names for a pair-list path: d.csv -> d.units.csv, d.manifest.json.
struct DatasetPaths {
  std::filesystem::path pairs;
  std::filesystem::path units;
  std::filesystem::path manifest;
};

inline DatasetPaths dataset_paths(const std::filesystem::path& pairs) {
  std::filesystem::path stem = pairs;
  if (stem.extension() == ".csv") stem.replace_extension();
  DatasetPaths p;
  p.pairs = pairs;
  p.units = stem.string() + ".units.csv";
  p.manifest = stem.string() + ".manifest.json";
  return p;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string pairs_csv(const DyadicDataset& data) {
  std::string s = "i,j,y\n";
  for (int i = 0; i < data.n_units; ++i) {
    for (int j = 0; j < data.n_units; ++j) {
      if (i == j) continue;
      s += std::to_string(i);
      s += ',';
      s += std::to_string(j);
      s += ',';
      s += format_double(data.outcome(i, j));
      s += '\n';
    }
  }
  return s;
}

inline std::string units_csv(const DyadicDataset& data) {
  std::string s = "i";
  for (int k = 1; k <= data.d_x; ++k) s += ",x_" + std::to_string(k);
  s += '\n';
  for (int i = 0; i < data.n_units; ++i) {
    s += std::to_string(i);
    for (double v : data.unit(i)) {
      s += ',';
      s += format_double(v);
    }
    s += '\n';
  }
  return s;
}

inline void write_dataset(const DyadicDataset& data, const DatasetPaths& paths) {
  write_text_file(paths.pairs, pairs_csv(data));
  write_text_file(paths.units, units_csv(data));
}

/// Parses the unit and pair files. Every ordered off-diagonal pair must appear once.
inline DyadicDataset parse_dataset(const std::string& units_text, const std::string& pairs_text) {
  std::istringstream units(units_text);
  std::string line;
  if (!std::getline(units, line)) throw ConfigError("unit file is empty");
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "i") throw ConfigError("unit file header must be i,x_1,...");
  const int d_x = static_cast<int>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(units, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (static_cast<int>(f.size()) != d_x + 1) throw ConfigError("unit file row has wrong field count");
    const long idx = parse_integer(f[0], "unit index");
    if (idx != static_cast<long>(rows.size())) throw ConfigError("unit indices must be 0..N-1 in order");
    std::vector<double> r(d_x);
    for (int k = 0; k < d_x; ++k) r[k] = parse_double(f[k + 1], "regressor");
    rows.push_back(std::move(r));
  }
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw ConfigError("dataset needs at least 2 units");
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(n) * d_x);
  for (const auto& r : rows) x.insert(x.end(), r.begin(), r.end());

  std::vector<double> y(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<char> seen(static_cast<std::size_t>(n) * n, 0);
  std::istringstream pairs(pairs_text);
  if (!std::getline(pairs, line)) throw ConfigError("pair file is empty");
  if (line.rfind("i,j,y", 0) != 0) throw ConfigError("pair file header must be i,j,y");
  long count = 0;
  while (std::getline(pairs, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 3) throw ConfigError("pair file row has wrong field count");
    const long i = parse_integer(f[0], "pair index i");
    const long j = parse_integer(f[1], "pair index j");
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) throw ConfigError("pair index out of range or diagonal");
    const std::size_t at = static_cast<std::size_t>(i) * n + j;
    if (seen[at]) throw ConfigError("duplicate pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    seen[at] = 1;
    y[at] = parse_double(f[2], "outcome");
    ++count;
  }
  if (count != static_cast<long>(n) * (n - 1)) {
    throw ConfigError("pair file has " + std::to_string(count) + " rows, expected N(N-1) = " +
                      std::to_string(static_cast<long>(n) * (n - 1)));
  }
  return make_dataset(n, d_x, std::move(x), std::move(y));
}

inline DyadicDataset read_dataset(const DatasetPaths& paths) {
  return parse_dataset(read_text_file(paths.units), read_text_file(paths.pairs));
}

}  // namespace dyadic
