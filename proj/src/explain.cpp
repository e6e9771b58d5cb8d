#include "linex/explain.hpp"

#include <exception>

#include <omp.h>

#include "linex/baselines.hpp"
#include "linex/metrics.hpp"
#include "linex/solver.hpp"

namespace linex {

std::string to_string(Method m) {
  switch (m) {
    case Method::linex: return "linex";
    case Method::lime: return "lime";
    case Method::slime: return "slime";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "linex") return Method::linex;
  if (s == "lime") return Method::lime;
  if (s == "slime") return Method::slime;
  throw ConfigError("unknown method '" + s + "' (expected linex, lime or slime)");
}

std::string to_string(NeighborhoodKind k) {
  switch (k) {
    case NeighborhoodKind::random: return "random";
    case NeighborhoodKind::kde: return "kde";
    case NeighborhoodKind::exemplar: return "exemplar";
  }
  return "?";
}

NeighborhoodKind parse_neighborhood(const std::string& s) {
  if (s == "random") return NeighborhoodKind::random;
  if (s == "kde") return NeighborhoodKind::kde;
  if (s == "exemplar") return NeighborhoodKind::exemplar;
  throw ConfigError("unknown neighborhood '" + s + "' (expected random, kde or exemplar)");
}

void ExplainSettings::validate(std::size_t dim) const {
  if (n < 2) throw ConfigError("neighborhood size n must be at least 2");
  if (k < 2) throw ConfigError("environment count k must be at least 2");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (K < 1) throw ConfigError("sparsity budget K must be at least 1");
  if (bandwidth < 0.0) throw ConfigError("bandwidth must be nonnegative");
  if (sigma && (static_cast<std::size_t>(sigma->size()) != dim || (sigma->array() <= 0.0).any()))
    throw ConfigError("sigma must have one positive entry per feature");
  if (gamma && !(*gamma > 0.0)) throw ConfigError("gamma override must be positive");
  if (t && !(*t > 0.0)) throw ConfigError("t override must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (max_rounds == 0) throw ConfigError("max_rounds must be positive");
}

SampleSet build_neighborhood(const Example& anchor, std::size_t index, const BlackBox& bb, const Dataset& train,
                             const ExplainSettings& s) {
  const RngSeed seed = s.seed.derive(index).derive(0);
  const KernelSpec kernel{s.tau};
  switch (s.neighborhood) {
    case NeighborhoodKind::random: {
      Vector sigma = s.sigma.value_or(Vector::Ones(anchor.features.size()));
      return random_perturbation(anchor, s.n, sigma, bb, kernel, seed);
    }
    case NeighborhoodKind::kde:
      return kde_generation(train, anchor, s.n, s.bandwidth, bb, kernel, seed);
    case NeighborhoodKind::exemplar:
      return exemplar_selection(train, anchor, s.n, bb);
  }
  throw ConfigError("unknown neighborhood kind");
}

namespace {

Explanation explain_linex(const EnvironmentSet& es, const ExplainSettings& s) {
  Explanation out;
  const auto d = static_cast<Eigen::Index>(es.dim());
  auto support = sparsify(es, s.K, s.ridge_alt);

  out.attribution.coefficients = Vector::Zero(d);
  if (support.empty()) {
    // nothing survives selection: intercept-only explanation
    LimeConfig cfg;
    cfg.K = s.K;
    out.attribution.intercept = lime_explain(es.base, cfg).intercept;
    return out;
  }

  EnvironmentSet restricted = es.restrict_to(support);
  GameConfig cfg;
  cfg.k = es.k();
  cfg.epsilon = s.epsilon;
  cfg.max_rounds = s.max_rounds;
  cfg.inner_max_iters = s.inner_max_iters;
  cfg.inner_tol = s.inner_tol;
  if (s.gamma) {
    cfg.gamma = *s.gamma;
  } else {
    try {
      cfg.gamma = default_gamma(restricted, support.size());
    } catch (const DegenerateGamma&) {
      cfg.gamma = 1.0;
      out.gamma_fallback = true;
    }
  }
  cfg.t = s.t.value_or(cfg.gamma * static_cast<double>(support.size()));

  auto result = play_game(restricted, cfg);
  for (std::size_t j = 0; j < support.size(); ++j)
    out.attribution.coefficients[static_cast<Eigen::Index>(support[j])] = result.attribution.coefficients[static_cast<Eigen::Index>(j)];
  out.attribution.intercept = result.attribution.intercept;
  out.converged = result.state.converged;
  out.rounds = result.state.rounds_used;
  out.gamma = cfg.gamma;
  out.t = cfg.t;
  return out;
}

}  // namespace

Explanation explain_example(const Example& anchor, std::size_t index, BlackBoxPtr bb, const Dataset& train,
                            const ExplainSettings& s) {
  s.validate(static_cast<std::size_t>(anchor.features.size()));
  auto cached = with_cache(std::move(bb));
  SampleSet base = build_neighborhood(anchor, index, *cached, train, s);

  LimeConfig lime_cfg;
  lime_cfg.K = s.K;
  lime_cfg.kernel = KernelSpec{s.tau};
  lime_cfg.ridge_alt = s.ridge_alt;

  Explanation out;
  switch (s.method) {
    case Method::lime:
      out.attribution = lime_explain(base, lime_cfg);
      break;
    case Method::slime: {
      auto es = bootstrap_environments(std::move(base), anchor, s.k, s.seed.derive(index).derive(1));
      out.attribution = slime_explain(es, lime_cfg);
      break;
    }
    case Method::linex: {
      auto es = bootstrap_environments(std::move(base), anchor, s.k, s.seed.derive(index).derive(1));
      out = explain_linex(es, s);
      break;
    }
  }
  out.attribution.refresh_support();
  out.attribution.query_count = cached->ledger().total_queries.load();
  out.cache_hits = cached->ledger().cache_hits.load();
  return out;
}

std::vector<Explanation> explain_all_serial(const std::vector<Example>& anchors, const BlackBoxSelector& bb,
                                            const Dataset& train, const ExplainSettings& s) {
  std::vector<Explanation> out;
  out.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) out.push_back(explain_example(anchors[i], i, bb(i), train, s));
  return out;
}

std::vector<Explanation> explain_all_parallel(const std::vector<Example>& anchors, const BlackBoxSelector& bb,
                                              const Dataset& train, const ExplainSettings& s, std::size_t workers) {
  const auto n = static_cast<std::ptrdiff_t>(anchors.size());
  std::vector<Explanation> out(anchors.size());
  std::vector<std::exception_ptr> errors(anchors.size());
  const int threads = workers > 0 ? static_cast<int>(workers) : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      out[u] = explain_example(anchors[u], u, bb(u), train, s);
    } catch (...) {
      errors[u] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double upsilon_resampled(const Example& anchor, std::size_t index, BlackBoxPtr bb, const Dataset& train,
                         const ExplainSettings& s, std::size_t repeats) {
  if (repeats == 0) throw ConfigError("resampled unidirectionality needs at least one repeat");
  std::vector<Vector> attributions;
  for (std::size_t r = 0; r < repeats; ++r) {
    ExplainSettings rs = s;
    rs.seed = s.seed.derive(0x5EED0000ULL + r);
    attributions.push_back(explain_example(anchor, index, bb, train, rs).attribution.coefficients);
  }
  return upsilon(attributions);
}

}  // namespace linex
