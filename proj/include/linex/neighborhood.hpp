#pragma once

#include <vector>

#include "linex/blackbox.hpp"
#include "linex/core.hpp"

namespace linex {

struct WeightedSample {
  Vector features;
  double target = 0.0;
  double weight = 1.0;
};

using SampleSet = std::vector<WeightedSample>;

/// Gaussian proximity kernel with width tau * sqrt(d).
struct KernelSpec {
  double tau = 0.75;

  double width(std::size_t dim) const;
  /// exp(-||x - anchor||^2 / width^2)
  double weight(const Vector& x, const Vector& anchor) const;
};

/// The base neighborhood and its k bootstrap resamples. `draws[e]` holds the
/// base indices that make up environment e.
struct EnvironmentSet {
  SampleSet base;
  std::vector<SampleSet> envs;
  std::vector<std::vector<std::size_t>> draws;
  Example anchor;

  std::size_t k() const { return envs.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(anchor.features.size()); }
  /// Copy with every sample (and the anchor) projected onto `features`.
  EnvironmentSet restrict_to(const std::vector<std::size_t>& features) const;
};

/// anchor + N(0, diag(sigma^2)) samples, scored by `bb` in one batch.
SampleSet random_perturbation(const Example& anchor, std::size_t n, const Vector& sigma, const BlackBox& bb,
                              const KernelSpec& kernel, RngSeed seed);

/// Samples a training point with probability proportional to its kernel
/// proximity to the anchor, then adds N(0, bandwidth^2 I).
SampleSet kde_generation(const Dataset& train, const Example& anchor, std::size_t n, double bandwidth,
                         const BlackBox& bb, const KernelSpec& kernel, RngSeed seed);

/// The n nearest pool examples by Euclidean distance (ties to lower index),
/// with unit weights.
SampleSet exemplar_selection(const Dataset& pool, const Example& anchor, std::size_t n, const BlackBox& bb);

/// k environments of |base| draws each, with replacement. Targets and weights
/// are carried from the base; nothing is re-queried.
EnvironmentSet bootstrap_environments(SampleSet base, const Example& anchor, std::size_t k, RngSeed seed);

/// Splits a sample set into design matrix, targets and weights.
struct DesignView {
  Matrix x;
  Vector y;
  Vector w;
};
DesignView design(const SampleSet& samples);

}  // namespace linex
