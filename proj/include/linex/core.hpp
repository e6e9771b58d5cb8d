#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "linex/errors.hpp"

namespace linex {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Task { classification, regression };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct Example {
  Vector features;
  std::optional<double> label;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> feature_names;
  Task task = Task::classification;

  std::size_t size() const { return examples.size(); }
  std::size_t dim() const { return feature_names.size(); }
  bool empty() const { return examples.empty(); }

  /// Features as an n x d matrix, one row per example.
  Matrix feature_matrix() const;
  /// Number of classes (max label + 1); 0 for regression or unlabeled data.
  std::size_t class_count() const;
  /// Throws SchemaError when shapes, finiteness or labels are inconsistent.
  void validate() const;
};

struct Attribution {
  Vector coefficients;
  double intercept = 0.0;
  std::vector<std::size_t> support;
  std::uint64_t query_count = 0;

  double predict(const Vector& x) const { return coefficients.dot(x) + intercept; }
  /// Recomputes `support` from the nonzero coefficients.
  void refresh_support();
};

/// Seed for every stochastic operation. Streams for independent workers are
/// split off with derive(), so results never depend on scheduling.
struct RngSeed {
  std::uint64_t value = 0;

  RngSeed derive(std::uint64_t stream) const;
  friend bool operator==(RngSeed, RngSeed) = default;
};

// ---------------------------------------------------------------------------
// CSV I/O

Dataset load_csv(const std::string& path, Task task,
                 const std::optional<std::string>& label_column = std::nullopt);
void write_csv(const Dataset& ds, const std::string& path,
               const std::string& label_column = "label");

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             RngSeed seed);

// ---------------------------------------------------------------------------
// Standardization

/// Per-feature z-scoring fitted on a training set. Zero-variance features get
/// scale 1.
class Standardizer {
 public:
  Standardizer() = default;
  static Standardizer fit(const Dataset& train);

  Vector transform(const Vector& x) const;
  Vector inverse(const Vector& z) const;
  Dataset transform(const Dataset& ds) const;

  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector mean_;
  Vector scale_;
};

}  // namespace linex
