#include "linex/baselines.hpp"

#include <numeric>

#include "linex/solver.hpp"

namespace linex {

Attribution lime_explain(const SampleSet& base, const LimeConfig& cfg) {
  if (base.empty()) throw ConfigError("LIME needs a nonempty neighborhood");
  if (cfg.K < 1) throw ConfigError("sparsity budget K must be at least 1");
  const auto d = static_cast<std::size_t>(base.front().features.size());

  std::vector<std::size_t> support;
  double ridge = cfg.debias_ridge;
  if (cfg.ridge_alt) {
    support.resize(d);
    std::iota(support.begin(), support.end(), 0);
    ridge = *cfg.ridge_alt;
  } else {
    support = select_features(base, cfg.K);
  }

  Attribution a;
  a.coefficients = Vector::Zero(static_cast<Eigen::Index>(d));
  if (support.empty()) {
    // intercept-only model: the weighted target mean
    double wsum = 0.0, ysum = 0.0, plain = 0.0;
    for (const auto& s : base) {
      wsum += s.weight;
      ysum += s.weight * s.target;
      plain += s.target;
    }
    a.intercept = wsum > 0.0 ? ysum / wsum : plain / static_cast<double>(base.size());
    return a;
  }

  SampleSet restricted;
  restricted.reserve(base.size());
  for (const auto& s : base) {
    Vector f(static_cast<Eigen::Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) f[static_cast<Eigen::Index>(j)] = s.features[static_cast<Eigen::Index>(support[j])];
    restricted.push_back({std::move(f), s.target, s.weight});
  }
  auto fit = weighted_lsq(restricted, ridge);
  for (std::size_t j = 0; j < support.size(); ++j)
    a.coefficients[static_cast<Eigen::Index>(support[j])] = fit.slope[static_cast<Eigen::Index>(j)];
  a.intercept = fit.intercept;
  a.refresh_support();
  return a;
}

Attribution slime_explain(const EnvironmentSet& es, const LimeConfig& cfg) {
  if (es.envs.empty()) throw ConfigError("S-LIME needs at least one environment");
  Attribution mean;
  mean.coefficients = Vector::Zero(static_cast<Eigen::Index>(es.dim()));
  for (const auto& env : es.envs) {
    auto a = lime_explain(env, cfg);
    mean.coefficients += a.coefficients;
    mean.intercept += a.intercept;
  }
  const double k = static_cast<double>(es.envs.size());
  mean.coefficients /= k;
  mean.intercept /= k;
  mean.refresh_support();
  return mean;
}

}  // namespace linex
