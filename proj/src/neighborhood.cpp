#include "linex/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace linex {

double KernelSpec::width(std::size_t dim) const {
  if (!(tau > 0.0)) throw ConfigError("kernel tau must be positive");
  return tau * std::sqrt(static_cast<double>(dim));
}

double KernelSpec::weight(const Vector& x, const Vector& anchor) const {
  double w = width(static_cast<std::size_t>(anchor.size()));
  return std::exp(-(x - anchor).squaredNorm() / (w * w));
}

EnvironmentSet EnvironmentSet::restrict_to(const std::vector<std::size_t>& features) const {
  auto project = [&](const Vector& v) {
    Vector out(static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[static_cast<Eigen::Index>(features[j])];
    return out;
  };
  auto project_set = [&](const SampleSet& s) {
    SampleSet out;
    out.reserve(s.size());
    for (const auto& smp : s) out.push_back({project(smp.features), smp.target, smp.weight});
    return out;
  };
  EnvironmentSet r;
  r.base = project_set(base);
  for (const auto& e : envs) r.envs.push_back(project_set(e));
  r.draws = draws;
  r.anchor = {project(anchor.features), anchor.label};
  return r;
}

namespace {

SampleSet score(Matrix points, const Example& anchor, const BlackBox& bb, const KernelSpec* kernel) {
  auto targets = bb.predict_batch(points);
  if (targets.size() != static_cast<std::size_t>(points.rows()))
    throw ProtocolError("black-box returned wrong number of outputs");
  SampleSet out(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (!std::isfinite(targets[j])) throw ProtocolError("black-box returned a non-finite value");
    out[j].features = points.row(static_cast<Eigen::Index>(j)).transpose();
    out[j].target = targets[j];
    out[j].weight = kernel ? kernel->weight(out[j].features, anchor.features) : 1.0;
  }
  return out;
}

}  // namespace

SampleSet random_perturbation(const Example& anchor, std::size_t n, const Vector& sigma, const BlackBox& bb,
                              const KernelSpec& kernel, RngSeed seed) {
  const auto d = anchor.features.size();
  if (n < 2) throw ConfigError("neighborhood size must be at least 2");
  if (sigma.size() != d || (sigma.array() <= 0.0).any()) throw ConfigError("sigma must be positive per feature");

  std::mt19937_64 rng(seed.value);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix points(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) points(i, j) = anchor.features[j] + sigma[j] * normal(rng);
  return score(std::move(points), anchor, bb, &kernel);
}

SampleSet kde_generation(const Dataset& train, const Example& anchor, std::size_t n, double bandwidth,
                         const BlackBox& bb, const KernelSpec& kernel, RngSeed seed) {
  if (train.empty()) throw EmptyDataset("KDE generation needs a nonempty training set");
  if (n < 1) throw ConfigError("neighborhood size must be positive");
  if (bandwidth < 0.0) throw ConfigError("KDE bandwidth must be nonnegative");

  // selection probabilities from log-weights so far-away anchors do not underflow
  const double width = kernel.width(static_cast<std::size_t>(anchor.features.size()));
  std::vector<double> logw(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    logw[i] = -(train.examples[i].features - anchor.features).squaredNorm() / (width * width);
  double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> probs(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) probs[i] = std::exp(logw[i] - top);

  std::mt19937_64 rng(seed.value);
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = anchor.features.size();
  Matrix points(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& centre = train.examples[pick(rng)].features;
    for (Eigen::Index j = 0; j < d; ++j) points(i, j) = centre[j] + bandwidth * normal(rng);
  }
  return score(std::move(points), anchor, bb, &kernel);
}

SampleSet exemplar_selection(const Dataset& pool, const Example& anchor, std::size_t n, const BlackBox& bb) {
  if (n < 1 || pool.size() < n) throw ConfigError("exemplar pool smaller than requested neighborhood");
  std::vector<std::pair<double, std::size_t>> dist(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    dist[i] = {(pool.examples[i].features - anchor.features).squaredNorm(), i};
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n), dist.end());
  Matrix points(static_cast<Eigen::Index>(n), anchor.features.size());
  for (std::size_t j = 0; j < n; ++j) points.row(static_cast<Eigen::Index>(j)) = pool.examples[dist[j].second].features.transpose();
  return score(std::move(points), anchor, bb, nullptr);
}

EnvironmentSet bootstrap_environments(SampleSet base, const Example& anchor, std::size_t k, RngSeed seed) {
  if (k < 2) throw ConfigError("the game needs at least two environments");
  if (base.empty()) throw ConfigError("cannot bootstrap an empty neighborhood");
  EnvironmentSet es;
  es.anchor = anchor;
  std::mt19937_64 rng(seed.value);
  std::uniform_int_distribution<std::size_t> pick(0, base.size() - 1);
  for (std::size_t e = 0; e < k; ++e) {
    std::vector<std::size_t> idx(base.size());
    for (auto& i : idx) i = pick(rng);
    SampleSet env;
    env.reserve(idx.size());
    for (auto i : idx) env.push_back(base[i]);
    es.envs.push_back(std::move(env));
    es.draws.push_back(std::move(idx));
  }
  es.base = std::move(base);
  return es;
}

DesignView design(const SampleSet& samples) {
  DesignView v;
  if (samples.empty()) return v;
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto d = samples.front().features.size();
  v.x.resize(n, d);
  v.y.resize(n);
  v.w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    v.x.row(i) = s.features.transpose();
    v.y[i] = s.target;
    v.w[i] = s.weight;
  }
  return v;
}

}  // namespace linex
