#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "linex/core.hpp"

namespace linex {

/// Query-only model f: R^d -> R. Implementations must be pure and safe for
/// concurrent predict_batch calls.
class BlackBox {
 public:
  virtual ~BlackBox() = default;

  /// One output per row of `rows` (n x d).
  virtual std::vector<double> predict_batch(const Matrix& rows) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual Task task() const = 0;
  /// Probability channel being explained, for classifiers.
  virtual std::optional<std::size_t> class_of_interest() const { return std::nullopt; }

  double predict(const Vector& x) const;
};

using BlackBoxPtr = std::shared_ptr<const BlackBox>;

BlackBoxPtr builtin_linear(Vector weights, double intercept);

/// f(x) = magnitude * |x[axis]|, whose gradient flips sign at x[axis] = 0.
BlackBoxPtr builtin_piecewise_sign(std::size_t dim, std::size_t axis, double magnitude);

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  std::size_t trees = 50;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 1;
  /// Features tried per split; 0 means round(sqrt(d)).
  std::size_t max_features = 0;
  RngSeed seed{};
};

/// Bagged CART ensemble. Classification trees vote; regression trees average.
class RandomForest {
 public:
  static std::shared_ptr<const RandomForest> train(const Dataset& ds, const ForestParams& params);

  /// Vote fraction per class for classification; one-element mean for regression.
  Vector predict_proba(const Vector& x) const;
  double predict_value(const Vector& x) const;
  std::size_t predict_class(const Vector& x) const;
  double accuracy(const Dataset& ds) const;

  std::size_t dimension() const { return dim_; }
  std::size_t class_count() const { return classes_; }
  Task task() const { return task_; }

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // class index for classification leaves, mean for regression
  };
  using Tree = std::vector<Node>;

 private:
  std::vector<Tree> trees_;
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  Task task_ = Task::classification;
};

/// Exposes one output channel of a trained forest as a BlackBox: the vote
/// fraction of `class_of_interest` for classifiers, the mean for regressors.
BlackBoxPtr forest_channel(std::shared_ptr<const RandomForest> forest,
                           std::optional<std::size_t> class_of_interest);

/// Trains a forest and exposes `class_of_interest` (default 0). Throws
/// TrainError when the dataset lacks labels or some class is absent.
BlackBoxPtr builtin_forest(const Dataset& ds, const ForestParams& params,
                           std::optional<std::size_t> class_of_interest = std::nullopt);

// ---------------------------------------------------------------------------
// External child process speaking NDJSON on stdin/stdout

struct SubprocessOptions {
  std::chrono::milliseconds timeout{10000};
  std::size_t max_batch_rows = 1024;
  std::optional<std::size_t> class_of_interest;
};

class SubprocessBlackBox final : public BlackBox {
 public:
  /// Spawns `command` and performs the meta handshake.
  SubprocessBlackBox(std::vector<std::string> command, SubprocessOptions options = {});
  ~SubprocessBlackBox() override;

  SubprocessBlackBox(const SubprocessBlackBox&) = delete;
  SubprocessBlackBox& operator=(const SubprocessBlackBox&) = delete;

  std::vector<double> predict_batch(const Matrix& rows) const override;
  std::size_t dimension() const override { return dim_; }
  Task task() const override { return task_; }
  std::optional<std::size_t> class_of_interest() const override { return options_.class_of_interest; }
  std::optional<std::size_t> classes() const { return classes_; }

 private:
  void send_line(const std::string& line) const;
  std::string read_line() const;
  void shutdown() noexcept;

  SubprocessOptions options_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::size_t dim_ = 0;
  Task task_ = Task::regression;
  std::optional<std::size_t> classes_;

  mutable std::mutex mu_;
  mutable std::string buffer_;
  mutable std::int64_t next_id_ = 0;
  mutable bool broken_ = false;
};

BlackBoxPtr subprocess_blackbox(std::vector<std::string> command, SubprocessOptions options = {});

// ---------------------------------------------------------------------------
// Caching and query accounting

struct QueryLedger {
  std::atomic<std::uint64_t> total_queries{0};
  std::atomic<std::uint64_t> cache_hits{0};
};

/// Memoizes by exact bit pattern of the input vector. Every cache miss is one
/// query against the wrapped model.
class CachedBlackBox final : public BlackBox {
 public:
  explicit CachedBlackBox(BlackBoxPtr inner);

  std::vector<double> predict_batch(const Matrix& rows) const override;
  std::size_t dimension() const override { return inner_->dimension(); }
  Task task() const override { return inner_->task(); }
  std::optional<std::size_t> class_of_interest() const override { return inner_->class_of_interest(); }

  const QueryLedger& ledger() const { return *ledger_; }

 private:
  BlackBoxPtr inner_;
  std::shared_ptr<QueryLedger> ledger_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, double> cache_;
};

std::shared_ptr<const CachedBlackBox> with_cache(BlackBoxPtr bb);

/// Presents a raw-unit model in standardized coordinates: inputs are mapped
/// back through the standardizer before being forwarded.
BlackBoxPtr standardized_view(BlackBoxPtr raw, Standardizer scaler);

}  // namespace linex
