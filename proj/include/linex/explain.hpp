#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "linex/blackbox.hpp"
#include "linex/core.hpp"
#include "linex/neighborhood.hpp"

namespace linex {

enum class Method { linex, lime, slime };
enum class NeighborhoodKind { random, kde, exemplar };

std::string to_string(Method m);
Method parse_method(const std::string& s);
std::string to_string(NeighborhoodKind k);
NeighborhoodKind parse_neighborhood(const std::string& s);

/// Everything needed to explain one example with any method.
struct ExplainSettings {
  Method method = Method::linex;
  NeighborhoodKind neighborhood = NeighborhoodKind::random;
  std::size_t n = 10;
  std::optional<Vector> sigma;  // per-feature perturbation std; ones when unset
  double bandwidth = 0.3;       // KDE noise, standardized units
  std::size_t k = 2;
  double tau = 0.25;
  std::size_t K = 5;
  std::optional<double> ridge_alt;
  std::optional<double> gamma;  // overrides the LIME-derived bound
  std::optional<double> t;      // overrides gamma * d
  double epsilon = 1e-6;
  std::size_t max_rounds = 200;
  std::size_t inner_max_iters = 500;
  double inner_tol = 1e-8;
  RngSeed seed{};

  void validate(std::size_t dim) const;
};

struct Explanation {
  Attribution attribution;
  bool converged = true;
  std::size_t rounds = 0;
  double gamma = 0.0;
  double t = 0.0;
  bool gamma_fallback = false;  // every LIME coefficient was zero; gamma = 1
  std::uint64_t cache_hits = 0;
};

/// Black-box (in standardized coordinates) to use for the example at `index`.
using BlackBoxSelector = std::function<BlackBoxPtr(std::size_t index)>;

/// The base neighborhood around `anchor`; identical for every method given the
/// same seed and index.
SampleSet build_neighborhood(const Example& anchor, std::size_t index, const BlackBox& bb, const Dataset& train,
                             const ExplainSettings& s);

/// Explains one example. `train` (standardized) feeds the KDE and exemplar
/// neighborhoods. Queries go through a fresh per-example cache whose miss count
/// becomes the attribution's query_count.
Explanation explain_example(const Example& anchor, std::size_t index, BlackBoxPtr bb, const Dataset& train,
                            const ExplainSettings& s);

/// Reference implementation: examples explained one after another.
std::vector<Explanation> explain_all_serial(const std::vector<Example>& anchors, const BlackBoxSelector& bb,
                                            const Dataset& train, const ExplainSettings& s);

/// OpenMP worker pool over examples. Output order and values match the serial
/// path exactly. `workers` = 0 uses the OpenMP default.
std::vector<Explanation> explain_all_parallel(const std::vector<Example>& anchors, const BlackBoxSelector& bb,
                                              const Dataset& train, const ExplainSettings& s,
                                              std::size_t workers = 0);

/// Unidirectionality of `repeats` re-explanations of one example under fresh
/// neighborhood seeds.
double upsilon_resampled(const Example& anchor, std::size_t index, BlackBoxPtr bb, const Dataset& train,
                         const ExplainSettings& s, std::size_t repeats);

}  // namespace linex
