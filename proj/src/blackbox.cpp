#include "linex/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace linex {

double BlackBox::predict(const Vector& x) const {
  Matrix rows = x.transpose();
  return predict_batch(rows).front();
}

namespace {

void check_dim(const Matrix& rows, std::size_t d) {
  if (static_cast<std::size_t>(rows.cols()) != d)
    throw ConfigError("black-box expects " + std::to_string(d) + " features, got " + std::to_string(rows.cols()));
}

class LinearModel final : public BlackBox {
 public:
  LinearModel(Vector w, double b) : w_(std::move(w)), b_(b) {}
  std::vector<double> predict_batch(const Matrix& rows) const override {
    check_dim(rows, dimension());
    Vector y = rows * w_;
    std::vector<double> out(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = y[i] + b_;
    return out;
  }
  std::size_t dimension() const override { return static_cast<std::size_t>(w_.size()); }
  Task task() const override { return Task::regression; }

 private:
  Vector w_;
  double b_;
};

class PiecewiseSign final : public BlackBox {
 public:
  PiecewiseSign(std::size_t d, std::size_t axis, double m) : d_(d), axis_(axis), m_(m) {}
  std::vector<double> predict_batch(const Matrix& rows) const override {
    check_dim(rows, d_);
    std::vector<double> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      out[static_cast<std::size_t>(i)] = m_ * std::abs(rows(i, static_cast<Eigen::Index>(axis_)));
    return out;
  }
  std::size_t dimension() const override { return d_; }
  Task task() const override { return Task::regression; }

 private:
  std::size_t d_, axis_;
  double m_;
};

}  // namespace

BlackBoxPtr builtin_linear(Vector weights, double intercept) {
  if (!weights.allFinite()) throw ConfigError("linear black-box weights must be finite");
  if (weights.size() == 0) throw ConfigError("linear black-box needs at least one weight");
  return std::make_shared<LinearModel>(std::move(weights), intercept);
}

BlackBoxPtr builtin_piecewise_sign(std::size_t dim, std::size_t axis, double magnitude) {
  if (axis >= dim) throw ConfigError("piecewise_sign axis out of range");
  return std::make_shared<PiecewiseSign>(dim, axis, magnitude);
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

struct TreeBuilder {
  const Matrix& x;
  const std::vector<double>& y;
  Task task;
  std::size_t classes;
  const ForestParams& params;
  std::size_t mtry;
  std::mt19937_64& rng;
  RandomForest::Tree nodes;

  double impurity_of(const std::vector<std::size_t>& idx) const {
    if (task == Task::classification) {
      std::vector<double> counts(classes, 0.0);
      for (auto i : idx) counts[static_cast<std::size_t>(y[i])] += 1.0;
      double g = 1.0, n = static_cast<double>(idx.size());
      for (double c : counts) g -= (c / n) * (c / n);
      return g;
    }
    double mean = 0.0;
    for (auto i : idx) mean += y[i];
    mean /= static_cast<double>(idx.size());
    double s = 0.0;
    for (auto i : idx) s += (y[i] - mean) * (y[i] - mean);
    return s / static_cast<double>(idx.size());
  }

  double leaf_value(const std::vector<std::size_t>& idx) const {
    if (task == Task::classification) {
      std::vector<std::size_t> counts(classes, 0);
      for (auto i : idx) ++counts[static_cast<std::size_t>(y[i])];
      return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    double mean = 0.0;
    for (auto i : idx) mean += y[i];
    return mean / static_cast<double>(idx.size());
  }

  int build(std::vector<std::size_t> idx, std::size_t depth) {
    int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<std::size_t>(id)].value = leaf_value(idx);
    double parent_impurity = impurity_of(idx);
    if (depth >= params.max_depth || idx.size() < 2 * params.min_leaf || parent_impurity <= 1e-12) return id;

    std::vector<std::size_t> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);
    features.resize(mtry);

    double best_score = parent_impurity - 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    const double n = static_cast<double>(idx.size());
    for (auto f : features) {
      std::vector<std::size_t> sorted = idx;
      auto col = static_cast<Eigen::Index>(f);
      std::sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return x(static_cast<Eigen::Index>(a), col) < x(static_cast<Eigen::Index>(b), col); });
      // running class counts / sums for the left side
      std::vector<double> left_counts(classes, 0.0), right_counts(classes, 0.0);
      double left_sum = 0, left_sq = 0, right_sum = 0, right_sq = 0;
      for (auto i : sorted) {
        if (task == Task::classification) right_counts[static_cast<std::size_t>(y[i])] += 1;
        right_sum += y[i];
        right_sq += y[i] * y[i];
      }
      for (std::size_t p = 0; p + 1 < sorted.size(); ++p) {
        auto i = sorted[p];
        if (task == Task::classification) {
          left_counts[static_cast<std::size_t>(y[i])] += 1;
          right_counts[static_cast<std::size_t>(y[i])] -= 1;
        }
        left_sum += y[i];
        left_sq += y[i] * y[i];
        right_sum -= y[i];
        right_sq -= y[i] * y[i];
        double xv = x(static_cast<Eigen::Index>(i), col);
        double xn = x(static_cast<Eigen::Index>(sorted[p + 1]), col);
        if (xn <= xv) continue;
        double nl = static_cast<double>(p + 1), nr = n - nl;
        if (nl < static_cast<double>(params.min_leaf) || nr < static_cast<double>(params.min_leaf)) continue;
        double score;
        if (task == Task::classification) {
          double gl = 1.0, gr = 1.0;
          for (std::size_t c = 0; c < classes; ++c) {
            gl -= (left_counts[c] / nl) * (left_counts[c] / nl);
            gr -= (right_counts[c] / nr) * (right_counts[c] / nr);
          }
          score = (nl * gl + nr * gr) / n;
        } else {
          double vl = left_sq / nl - (left_sum / nl) * (left_sum / nl);
          double vr = right_sq / nr - (right_sum / nr) * (right_sum / nr);
          score = (nl * vl + nr * vr) / n;
        }
        if (score < best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (xv + xn);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx)
      (x(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? left : right).push_back(i);
    int l = build(std::move(left), depth + 1);
    int r = build(std::move(right), depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

double eval_tree(const RandomForest::Tree& tree, const Vector& x) {
  int id = 0;
  while (tree[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& n = tree[static_cast<std::size_t>(id)];
    id = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(id)].value;
}

}  // namespace

std::shared_ptr<const RandomForest> RandomForest::train(const Dataset& ds, const ForestParams& params) {
  if (ds.empty()) throw TrainError("cannot train a forest on an empty dataset");
  if (params.trees == 0) throw ConfigError("forest needs at least one tree");
  std::vector<double> y;
  y.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    if (!ex.label) throw TrainError("forest training requires labels");
    y.push_back(*ex.label);
  }

  auto forest = std::make_shared<RandomForest>();
  forest->dim_ = ds.dim();
  forest->task_ = ds.task;
  if (ds.task == Task::classification) {
    forest->classes_ = ds.class_count();
    std::vector<std::size_t> counts(forest->classes_, 0);
    for (double l : y) ++counts[static_cast<std::size_t>(l)];
    if (forest->classes_ < 2) throw TrainError("classification needs at least two classes");
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) throw TrainError("class " + std::to_string(c) + " is absent from the training data");
  }

  Matrix x = ds.feature_matrix();
  std::size_t mtry = params.max_features;
  if (mtry == 0) mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ds.dim())))));
  mtry = std::min(mtry, ds.dim());

  std::mt19937_64 rng(params.seed.value);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  for (std::size_t t = 0; t < params.trees; ++t) {
    std::vector<std::size_t> bag(ds.size());
    for (auto& b : bag) b = pick(rng);
    TreeBuilder builder{x, y, ds.task, forest->classes_, params, mtry, rng, {}};
    builder.build(std::move(bag), 0);
    forest->trees_.push_back(std::move(builder.nodes));
  }
  return forest;
}

Vector RandomForest::predict_proba(const Vector& x) const {
  if (task_ == Task::regression) return Vector::Constant(1, predict_value(x));
  Vector votes = Vector::Zero(static_cast<Eigen::Index>(classes_));
  for (const auto& tree : trees_) votes[static_cast<Eigen::Index>(eval_tree(tree, x))] += 1.0;
  return votes / static_cast<double>(trees_.size());
}

double RandomForest::predict_value(const Vector& x) const {
  if (task_ == Task::classification) return static_cast<double>(predict_class(x));
  double s = 0.0;
  for (const auto& tree : trees_) s += eval_tree(tree, x);
  return s / static_cast<double>(trees_.size());
}

std::size_t RandomForest::predict_class(const Vector& x) const {
  Vector p = predict_proba(x);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

double RandomForest::accuracy(const Dataset& ds) const {
  if (ds.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& ex : ds.examples)
    if (ex.label && static_cast<double>(predict_class(ex.features)) == *ex.label) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

namespace {

class ForestChannel final : public BlackBox {
 public:
  ForestChannel(std::shared_ptr<const RandomForest> f, std::optional<std::size_t> cls)
      : forest_(std::move(f)), cls_(cls) {}
  std::vector<double> predict_batch(const Matrix& rows) const override {
    check_dim(rows, dimension());
    std::vector<double> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      Vector x = rows.row(i).transpose();
      out[static_cast<std::size_t>(i)] = forest_->task() == Task::classification
                                             ? forest_->predict_proba(x)[static_cast<Eigen::Index>(*cls_)]
                                             : forest_->predict_value(x);
    }
    return out;
  }
  std::size_t dimension() const override { return forest_->dimension(); }
  Task task() const override { return forest_->task(); }
  std::optional<std::size_t> class_of_interest() const override { return cls_; }

 private:
  std::shared_ptr<const RandomForest> forest_;
  std::optional<std::size_t> cls_;
};

}  // namespace

BlackBoxPtr forest_channel(std::shared_ptr<const RandomForest> forest, std::optional<std::size_t> class_of_interest) {
  if (forest->task() == Task::classification) {
    if (!class_of_interest) class_of_interest = 0;
    if (*class_of_interest >= forest->class_count()) throw ConfigError("class_of_interest out of range");
  } else {
    class_of_interest.reset();
  }
  return std::make_shared<ForestChannel>(std::move(forest), class_of_interest);
}

BlackBoxPtr builtin_forest(const Dataset& ds, const ForestParams& params, std::optional<std::size_t> class_of_interest) {
  return forest_channel(RandomForest::train(ds, params), class_of_interest);
}

// ---------------------------------------------------------------------------
// Cache

CachedBlackBox::CachedBlackBox(BlackBoxPtr inner)
    : inner_(std::move(inner)), ledger_(std::make_shared<QueryLedger>()) {}

std::vector<double> CachedBlackBox::predict_batch(const Matrix& rows) const {
  const auto d = static_cast<std::size_t>(rows.cols());
  std::vector<std::string> keys(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    auto& key = keys[static_cast<std::size_t>(i)];
    key.resize(d * sizeof(double));
    for (std::size_t j = 0; j < d; ++j) {
      double v = rows(i, static_cast<Eigen::Index>(j));
      std::memcpy(key.data() + j * sizeof(double), &v, sizeof(double));
    }
  }

  std::vector<double> out(keys.size());
  std::vector<Eigen::Index> missing;
  std::unordered_map<std::string, std::size_t> pending;  // dedupes within one batch
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (auto it = cache_.find(keys[i]); it != cache_.end()) {
        out[i] = it->second;
        ledger_->cache_hits.fetch_add(1);
      } else if (!pending.count(keys[i])) {
        pending.emplace(keys[i], missing.size());
        missing.push_back(static_cast<Eigen::Index>(i));
      }
    }
  }
  if (!missing.empty()) {
    Matrix sub(static_cast<Eigen::Index>(missing.size()), rows.cols());
    for (std::size_t m = 0; m < missing.size(); ++m) sub.row(static_cast<Eigen::Index>(m)) = rows.row(missing[m]);
    auto values = inner_->predict_batch(sub);
    if (values.size() != missing.size()) throw ProtocolError("black-box returned wrong number of outputs");
    std::lock_guard lock(mu_);
    for (std::size_t m = 0; m < missing.size(); ++m) {
      auto [it, inserted] = cache_.emplace(keys[static_cast<std::size_t>(missing[m])], values[m]);
      if (inserted)
        ledger_->total_queries.fetch_add(1);
      else
        ledger_->cache_hits.fetch_add(1);  // raced with another caller
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (auto it = pending.find(keys[i]); it != pending.end()) {
        if (static_cast<Eigen::Index>(i) != missing[it->second]) ledger_->cache_hits.fetch_add(1);
        out[i] = cache_.at(keys[i]);
      }
    }
  }
  return out;
}

std::shared_ptr<const CachedBlackBox> with_cache(BlackBoxPtr bb) {
  return std::make_shared<CachedBlackBox>(std::move(bb));
}

namespace {

class StandardizedView final : public BlackBox {
 public:
  StandardizedView(BlackBoxPtr raw, Standardizer s) : raw_(std::move(raw)), scaler_(std::move(s)) {}
  std::vector<double> predict_batch(const Matrix& rows) const override {
    Matrix raw = (rows.array().rowwise() * scaler_.scale().transpose().array()).matrix();
    raw.rowwise() += scaler_.mean().transpose();
    return raw_->predict_batch(raw);
  }
  std::size_t dimension() const override { return raw_->dimension(); }
  Task task() const override { return raw_->task(); }
  std::optional<std::size_t> class_of_interest() const override { return raw_->class_of_interest(); }

 private:
  BlackBoxPtr raw_;
  Standardizer scaler_;
};

}  // namespace

BlackBoxPtr standardized_view(BlackBoxPtr raw, Standardizer scaler) {
  if (static_cast<std::size_t>(scaler.mean().size()) != raw->dimension())
    throw ConfigError("standardizer dimension does not match black-box");
  return std::make_shared<StandardizedView>(std::move(raw), std::move(scaler));
}

}  // namespace linex
