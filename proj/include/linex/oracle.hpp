#pragma once

#include <optional>
#include <vector>

#include "linex/core.hpp"
#include "linex/neighborhood.hpp"

namespace linex {

struct OracleOptions {
  std::size_t dim = 3;
  std::size_t trials = 200;
  std::vector<std::size_t> k_values{2, 3, 4, 5};
  std::size_t samples_per_env = 0;  // 0 means max(20, 4 * dim)
  std::optional<double> gamma;      // default 1, which covers every |w*| <= 1
  double tolerance = 1e-3;
  std::size_t max_rounds = 200000;
  RngSeed seed{};
};

struct OracleKReport {
  std::size_t k = 0;
  std::size_t trials = 0;
  double max_deviation = 0.0;
  std::size_t opposite_sign = 0;  // k = 2 only
  std::size_t same_sign = 0;      // k = 2 only
  std::size_t checked = 0;        // coordinates counted toward pass/fail
  std::size_t out_of_regime = 0;  // coordinates with a magnitude above gamma
  std::size_t nonconverged = 0;
  bool passed = true;
};

struct OracleReport {
  std::vector<OracleKReport> per_k;
  bool vacuous = false;
  bool passed() const;
};

/// k environments of `n` samples with exactly identity covariance (after
/// weighted centering) and noiseless targets x'w*_i + c_i.
EnvironmentSet diagonal_environments(const std::vector<Vector>& w_stars, std::size_t n, RngSeed seed);

/// Whether coordinate values `entries` fall under the closed-form regime for
/// bound `gamma`: opposite signs (k = 2) always do; otherwise every magnitude
/// must be at most gamma.
bool in_closed_form_regime(const std::vector<double>& entries, double gamma);

/// Plays the game on random diagonal environments and compares the summed
/// predictor to the closed-form equilibrium, coordinate by coordinate.
OracleReport oracle_check(const OracleOptions& opts);

}  // namespace linex
