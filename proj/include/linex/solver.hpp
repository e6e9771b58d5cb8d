#pragma once

#include <optional>
#include <vector>

#include "linex/core.hpp"
#include "linex/neighborhood.hpp"

namespace linex {

/// Knobs of the best-response game.
struct GameConfig {
  std::size_t k = 2;
  double gamma = 1.0;          // l_inf bound on each player's predictor
  double t = 1.0;              // l_1 bound on the summed predictor
  double epsilon = 1e-6;       // round-level convergence threshold
  std::size_t max_rounds = 200;
  std::size_t inner_max_iters = 500;
  double inner_tol = 1e-8;
  std::size_t dykstra_sweeps = 50;
  double dykstra_tol = 1e-9;

  /// t >= gamma * d, under which the closed-form equilibria apply.
  bool l1_slack(std::size_t dim) const { return t >= gamma * static_cast<double>(dim); }
  void validate() const;
};

struct PlayerState {
  std::vector<Vector> w_tilde;
  std::size_t rounds_used = 0;
  bool converged = false;
  std::vector<double> max_delta_history;

  Vector sum() const;
};

// ---------------------------------------------------------------------------
// Least squares

struct LsqFit {
  Vector slope;
  double intercept = 0.0;
};

/// argmin_w sum_j weight_j (target_j - w'x_j)^2 on weighted-centered data with
/// `ridge` added to the normal matrix. Throws SingularSystem when ridge is 0
/// and the normal matrix is rank deficient.
LsqFit weighted_lsq(const SampleSet& env, double ridge = 1e-8);

/// Weighted-centered quadratic sum_j w_j (yc_j - v'xc_j)^2 = c0 - 2 b'v + v'Qv.
struct CenteredQuadratic {
  Matrix q;
  Vector b;
  double c0 = 0.0;
  Vector x_mean;
  double y_mean = 0.0;

  static CenteredQuadratic from(const SampleSet& env);
  double objective(const Vector& v) const { return c0 - 2.0 * b.dot(v) + v.dot(q * v); }
  std::size_t dim() const { return static_cast<std::size_t>(b.size()); }
};

// ---------------------------------------------------------------------------
// Projections

/// Euclidean projection onto {u : ||u||_1 <= t} by sort-and-threshold.
Vector project_l1_ball(const Vector& v, double t);

/// Projection onto {w : ||w||_inf <= gamma, ||shift + w||_1 <= t} by Dykstra's
/// alternating projections. `feasible`, when given, is a known member of the set
/// used to repair residual infeasibility after the sweep budget runs out.
Vector project_box_l1(const Vector& v, const Vector& shift, double gamma, double t, std::size_t sweeps = 50,
                      double tol = 1e-9, const Vector* feasible = nullptr);

// ---------------------------------------------------------------------------
// Game

/// Constrained best response of one player against the summed predictor of
/// the others, by projected gradient descent with step 1/L.
Vector best_response(const CenteredQuadratic& env, const Vector& others_sum, const GameConfig& cfg,
                     const Vector* warm_start = nullptr);
Vector best_response(const SampleSet& env, const Vector& others_sum, const GameConfig& cfg);

/// Round-robin best-response dynamics over the environments of `es`.
class Game {
 public:
  Game(const EnvironmentSet& es, GameConfig cfg);

  /// One pass over all players in index order. Returns the largest l2 move.
  double round();
  /// Rounds until the largest move drops below epsilon or max_rounds is hit.
  const PlayerState& run();

  const PlayerState& state() const { return state_; }
  const GameConfig& config() const { return cfg_; }
  /// Summed predictor with an intercept fitted on the base neighborhood.
  Attribution attribution() const;

 private:
  const EnvironmentSet& es_;
  GameConfig cfg_;
  std::vector<CenteredQuadratic> quads_;
  PlayerState state_;
};

struct GameResult {
  Attribution attribution;
  PlayerState state;
};

GameResult play_game(const EnvironmentSet& es, const GameConfig& cfg);

// ---------------------------------------------------------------------------
// Closed-form equilibria

/// Coordinatewise: 0 where the signs disagree, otherwise the entry of smaller
/// magnitude (ties go to w1).
Vector ne_oracle_two(const Vector& w1_star, const Vector& w2_star);
double ne_oracle_two(double a, double b);

/// Odd k: coordinatewise median. Even k: the two-player rule applied to the
/// middle pair.
Vector ne_oracle_multi(const std::vector<Vector>& w_stars);

// ---------------------------------------------------------------------------
// Sparsity and defaults

struct LassoPath {
  std::vector<double> lambdas;  // decreasing
  std::vector<Vector> coefs;
};

/// Weighted lasso solutions on a geometric lambda grid, by warm-started
/// coordinate descent on weighted-centered data.
LassoPath weighted_lasso_path(const SampleSet& samples, std::size_t n_lambdas = 100, double min_ratio = 1e-4);

/// The K largest-magnitude coefficients at the sparsest path point with at
/// least K active features, in increasing index order.
std::vector<std::size_t> select_features(const SampleSet& samples, std::size_t K);

/// Feature indices the game is restricted to; all indices in dense mode.
std::vector<std::size_t> sparsify(const EnvironmentSet& es, std::size_t K,
                                  std::optional<double> ridge_alt = std::nullopt);

/// Largest |coefficient| of a per-environment LIME fit. Throws DegenerateGamma
/// when every coefficient is zero.
double default_gamma(const EnvironmentSet& es, std::size_t K);

}  // namespace linex
