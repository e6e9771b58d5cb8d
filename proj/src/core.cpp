#include "linex/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace linex {

int exit_code(ErrorClass cls) noexcept {
  switch (cls) {
    case ErrorClass::config: return 2;
    case ErrorClass::io: return 3;
    case ErrorClass::protocol: return 4;
    case ErrorClass::convergence: return 5;
    case ErrorClass::numeric: return 6;
  }
  return 1;
}

std::string to_string(Task task) {
  return task == Task::classification ? "classification" : "regression";
}

Task parse_task(const std::string& s) {
  if (s == "classification") return Task::classification;
  if (s == "regression") return Task::regression;
  throw ConfigError("unknown task '" + s + "'");
}

Matrix Dataset::feature_matrix() const {
  Matrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = examples[i].features.transpose();
  return m;
}

std::size_t Dataset::class_count() const {
  if (task != Task::classification) return 0;
  double hi = -1;
  for (const auto& ex : examples)
    if (ex.label) hi = std::max(hi, *ex.label);
  return hi < 0 ? 0 : static_cast<std::size_t>(hi) + 1;
}

void Dataset::validate() const {
  if (dim() == 0) throw SchemaError("dataset has no feature columns");
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& ex = examples[i];
    if (static_cast<std::size_t>(ex.features.size()) != dim())
      throw SchemaError("row " + std::to_string(i) + " has wrong dimension");
    if (!ex.features.allFinite()) throw SchemaError("row " + std::to_string(i) + " has non-finite feature");
    if (ex.label && task == Task::classification) {
      double l = *ex.label;
      if (l < 0 || l != std::floor(l)) throw SchemaError("row " + std::to_string(i) + " has non-integer class label");
    }
  }
}

void Attribution::refresh_support() {
  support.clear();
  for (Eigen::Index i = 0; i < coefficients.size(); ++i)
    if (coefficients[i] != 0.0) support.push_back(static_cast<std::size_t>(i));
}

RngSeed RngSeed::derive(std::uint64_t stream) const {
  // splitmix64 over (seed, stream)
  std::uint64_t z = value + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return RngSeed{z ^ (z >> 31)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim whitespace and a trailing CR
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, Task task, const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw EmptyDataset("'" + path + "' has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  auto header = split_csv_line(line);

  std::optional<std::size_t> label_idx;
  if (label_column) {
    auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end()) throw SchemaError("label column '" + *label_column + "' not in header");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }

  Dataset ds;
  ds.task = task;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_idx) ds.feature_names.push_back(header[c]);

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw SchemaError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                        " cells, got " + std::to_string(cells.size()));
    Example ex;
    ex.features.resize(static_cast<Eigen::Index>(ds.dim()));
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto v = parse_number(cells[c]);
      if (!v || !std::isfinite(*v))
        throw SchemaError("row " + std::to_string(row) + ", column '" + header[c] + "': non-numeric value '" +
                          cells[c] + "'");
      if (c == label_idx)
        ex.label = *v;
      else
        ex.features[j++] = *v;
    }
    ds.examples.push_back(std::move(ex));
  }
  if (ds.empty()) throw EmptyDataset("'" + path + "' has no data rows");
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path, const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  bool labeled = !ds.empty() && ds.examples.front().label.has_value();
  for (std::size_t c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << ds.feature_names[c];
  if (labeled) out << ',' << label_column;
  out << '\n';
  char buf[64];
  for (const auto& ex : ds.examples) {
    for (Eigen::Index c = 0; c < ex.features.size(); ++c) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, ex.features[c]);
      out << (c ? "," : "") << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    if (labeled) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, ex.label.value_or(0.0));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction, RngSeed seed) {
  if (ds.empty()) throw EmptyDataset("cannot split an empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0,1)");
  const std::size_t n = ds.size();
  // 1e-9 guards against 0.8*150 landing a hair above 120
  auto n_train = static_cast<std::size_t>(std::ceil((1.0 - test_fraction) * static_cast<double>(n) - 1e-9));
  n_train = std::min(n_train, n);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed.value);
  std::shuffle(idx.begin(), idx.end(), rng);

  Dataset train, test;
  train.feature_names = test.feature_names = ds.feature_names;
  train.task = test.task = ds.task;
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? train : test).examples.push_back(ds.examples[idx[i]]);
  return {std::move(train), std::move(test)};
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.empty()) throw EmptyDataset("cannot standardize on an empty dataset");
  Matrix x = train.feature_matrix();
  Standardizer s;
  s.mean_ = x.colwise().mean().transpose();
  s.scale_.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double var = (x.col(c).array() - s.mean_[c]).square().sum() / static_cast<double>(x.rows());
    double sd = std::sqrt(var);
    s.scale_[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Vector Standardizer::transform(const Vector& x) const {
  return ((x - mean_).array() / scale_.array()).matrix();
}

Vector Standardizer::inverse(const Vector& z) const {
  return (z.array() * scale_.array()).matrix() + mean_;
}

Dataset Standardizer::transform(const Dataset& ds) const {
  Dataset out = ds;
  for (auto& ex : out.examples) ex.features = transform(ex.features);
  return out;
}

}  // namespace linex
