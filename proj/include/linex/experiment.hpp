#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "linex/blackbox.hpp"
#include "linex/explain.hpp"
#include "linex/metrics.hpp"

namespace linex {

using json = nlohmann::json;

struct BlackBoxSpec {
  std::string type = "forest";  // forest | linear | piecewise_sign | subprocess
  std::size_t trees = 50;
  std::size_t max_depth = 8;
  std::vector<double> weights;
  double intercept = 0.0;
  std::size_t axis = 0;
  double magnitude = 1.0;
  std::vector<std::string> command;
  double timeout_seconds = 10.0;
  std::size_t max_batch_rows = 1024;
  /// Probability channel explained; unset means the predicted class of each
  /// explained example.
  std::optional<std::size_t> class_of_interest;
};

/// One experiment, parsed from a versioned JSON document.
struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  std::string dataset;
  std::optional<std::string> label_column;
  Task task = Task::classification;
  double test_fraction = 0.2;
  BlackBoxSpec blackbox;
  std::vector<Method> methods{Method::linex};
  NeighborhoodKind neighborhood = NeighborhoodKind::random;
  std::size_t n = 10;
  std::optional<double> sigma;
  double bandwidth = 0.3;
  std::size_t k = 2;
  double tau = 0.25;
  std::vector<double> tau_grid{0.05, 0.1, 0.25, 0.5, 0.75};
  std::vector<std::size_t> n_grid;  // sweep grids; default to {n} and {k}
  std::vector<std::size_t> k_grid;
  std::size_t K = 5;
  std::optional<double> ridge_alt;
  std::size_t exemplar_k = 3;
  std::optional<double> gamma;
  std::optional<double> t;
  double epsilon = 1e-6;
  std::size_t max_rounds = 200;
  std::size_t upsilon_resamples = 0;  // > 0 also reports resampling-based unidirectionality
  std::uint64_t seed = 0;
  std::string out_dir = "linex-out";
  std::size_t workers = 0;
  std::string axis = "tau";

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const json& doc);
  json to_json() const;
  void validate() const;

  ExplainSettings settings(Method method, std::size_t n, std::size_t k, double tau) const;
  std::vector<std::size_t> effective_n_grid() const { return n_grid.empty() ? std::vector<std::size_t>{n} : n_grid; }
  std::vector<std::size_t> effective_k_grid() const { return k_grid.empty() ? std::vector<std::size_t>{k} : k_grid; }
};

/// Data split, standardization and black-box, ready for explanation.
struct Prepared {
  Dataset train_raw, test_raw;
  Dataset train, test;  // standardized
  Standardizer scaler;
  BlackBoxPtr raw_blackbox;
  std::shared_ptr<const RandomForest> forest;
  std::vector<BlackBoxPtr> per_example;  // standardized-space model for each test example
  std::vector<double> blackbox_values;
  std::optional<double> test_accuracy;
  std::vector<std::vector<std::size_t>> neighbors;

  BlackBoxSelector selector() const;
};

/// Loads the dataset before touching any black-box, so a bad path fails with
/// no queries issued.
Prepared prepare(const RunConfig& cfg);

struct MetricValues {
  double infd = 0.0, gi = 0.0, ci = 0.0, upsilon = 0.0;
  std::optional<double> cac;
  std::optional<double> upsilon_resampled;
  std::vector<double> infd_terms, gi_terms, ci_terms, upsilon_terms, upsilon_resampled_terms;
  std::vector<std::size_t> cac_skipped;
  std::size_t nonconverged = 0;
};

struct MethodRun {
  Method method = Method::linex;
  std::size_t n = 0, k = 0;
  double tau = 0.0;
  std::vector<Explanation> explanations;
  MetricValues metrics;
};

MethodRun run_method(const Prepared& p, const RunConfig& cfg, Method method, std::size_t n, std::size_t k,
                     double tau);

ExplainedSet explained_set(const Prepared& p, const std::vector<Explanation>& explanations);
MetricValues evaluate(const Prepared& p, const RunConfig& cfg, const std::vector<Explanation>& explanations);

/// Metric names in report order; CAC only for classification.
std::vector<std::string> metric_names(Task task, bool with_resampled);
std::optional<double> metric_value(const MetricValues& m, const std::string& name);

struct Comparison {
  std::string method_a, method_b, metric;
  std::optional<double> p_value;  // empty when the differences are degenerate
  double mean_a = 0.0, mean_b = 0.0;
  std::string pairing;            // "example" or "tau"
};

struct BenchmarkResult {
  std::vector<MethodRun> runs;  // method-major, tau-minor
  std::vector<Comparison> comparisons;
  json report;                  // everything but the timestamp header
};

BenchmarkResult run_benchmark(const Prepared& p, const RunConfig& cfg);
std::string metrics_csv(const BenchmarkResult& r, const RunConfig& cfg);

struct SweepRow {
  std::string method;
  std::string axis;
  double value = 0.0;
  std::string metric;
  double mean = 0.0;
  double sem = 0.0;
};

std::vector<SweepRow> run_sweep(const Prepared& p, const RunConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

json explanation_record(const Prepared& p, std::size_t index, const Explanation& e);

/// Formats a double so it round-trips exactly.
std::string format_double(double v);

}  // namespace linex
