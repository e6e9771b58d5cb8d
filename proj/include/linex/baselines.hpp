#pragma once

#include <optional>

#include "linex/core.hpp"
#include "linex/neighborhood.hpp"

namespace linex {

struct LimeConfig {
  std::size_t K = 5;
  KernelSpec kernel{};
  /// Dense mode: skip feature selection and fit a ridge with this penalty.
  std::optional<double> ridge_alt;
  double debias_ridge = 1e-8;
};

/// Weighted lasso-path feature selection followed by a weighted ridge refit on
/// the selected support.
Attribution lime_explain(const SampleSet& base, const LimeConfig& cfg);

/// Mean of independent LIME fits over the environments of `es`.
Attribution slime_explain(const EnvironmentSet& es, const LimeConfig& cfg);

}  // namespace linex
