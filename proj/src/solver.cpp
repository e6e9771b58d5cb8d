#include "linex/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "linex/baselines.hpp"

namespace linex {

void GameConfig::validate() const {
  if (k < 2) throw ConfigError("game needs k >= 2");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(t > 0.0)) throw ConfigError("t must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(inner_tol > 0.0)) throw ConfigError("inner_tol must be positive");
  if (max_rounds == 0 || inner_max_iters == 0) throw ConfigError("iteration limits must be positive");
}

Vector PlayerState::sum() const {
  Vector s = Vector::Zero(w_tilde.empty() ? 0 : w_tilde.front().size());
  for (const auto& w : w_tilde) s += w;
  return s;
}

namespace {

// All-zero kernel weights (every sample underflowed) fall back to uniform.
Vector effective_weights(const Vector& w) {
  if (w.size() > 0 && w.sum() > 0.0) return w;
  return Vector::Ones(w.size());
}

struct Centered {
  Matrix x;
  Vector y;
  Vector w;
  Vector x_mean;
  double y_mean = 0.0;
};

Centered center(const SampleSet& samples) {
  if (samples.empty()) throw ConfigError("cannot fit on an empty sample set");
  auto v = design(samples);
  Centered c;
  c.w = effective_weights(v.w);
  double total = c.w.sum();
  c.x_mean = (v.x.transpose() * c.w) / total;
  c.y_mean = c.w.dot(v.y) / total;
  c.x = v.x.rowwise() - c.x_mean.transpose();
  c.y = v.y.array() - c.y_mean;
  return c;
}

double weighted_intercept(const SampleSet& samples, const Vector& coef) {
  auto v = design(samples);
  Vector w = effective_weights(v.w);
  return w.dot(v.y - v.x * coef) / w.sum();
}

}  // namespace

LsqFit weighted_lsq(const SampleSet& env, double ridge) {
  if (ridge < 0.0) throw ConfigError("ridge must be nonnegative");
  auto c = center(env);
  const auto d = c.x.cols();
  Matrix normal = c.x.transpose() * c.w.asDiagonal() * c.x;
  normal.diagonal().array() += ridge;
  Vector rhs = c.x.transpose() * (c.w.array() * c.y.array()).matrix();

  LsqFit fit;
  if (ridge > 0.0) {
    Eigen::LDLT<Matrix> ldlt(normal);
    fit.slope = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !fit.slope.allFinite())
      fit.slope = normal.completeOrthogonalDecomposition().solve(rhs);
  } else {
    Eigen::FullPivLU<Matrix> lu(normal);
    lu.setThreshold(1e-12);
    if (lu.rank() < d) throw SingularSystem("normal matrix is rank deficient");
    fit.slope = lu.solve(rhs);
  }
  fit.intercept = c.y_mean - c.x_mean.dot(fit.slope);
  return fit;
}

CenteredQuadratic CenteredQuadratic::from(const SampleSet& env) {
  auto c = center(env);
  CenteredQuadratic q;
  Matrix xw = c.w.asDiagonal() * c.x;
  q.q = c.x.transpose() * xw;
  q.b = xw.transpose() * c.y;
  q.c0 = (c.w.array() * c.y.array().square()).sum();
  q.x_mean = std::move(c.x_mean);
  q.y_mean = c.y_mean;
  return q;
}

// ---------------------------------------------------------------------------

Vector project_l1_ball(const Vector& v, double t) {
  if (!(t > 0.0)) throw ConfigError("l1 radius must be positive");
  if (v.lpNorm<1>() <= t) return v;
  std::vector<double> u(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    double candidate = (cumsum - t) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double m = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0 ? -m : m;
  }
  return out;
}

namespace {

Vector clip_box(const Vector& v, double gamma) { return v.cwiseMax(-gamma).cwiseMin(gamma); }

Vector project_shifted_l1(const Vector& v, const Vector& shift, double t) {
  return project_l1_ball(shift + v, t) - shift;
}

bool in_set(const Vector& w, const Vector& shift, double gamma, double t, double tol) {
  return w.lpNorm<Eigen::Infinity>() <= gamma + tol && (shift + w).lpNorm<1>() <= t + tol;
}

}  // namespace

Vector project_box_l1(const Vector& v, const Vector& shift, double gamma, double t, std::size_t sweeps, double tol,
                      const Vector* feasible) {
  if (in_set(v, shift, gamma, t, 0.0)) return v;
  Vector x = v;
  Vector p = Vector::Zero(v.size());
  Vector q = Vector::Zero(v.size());
  for (std::size_t s = 0; s < sweeps; ++s) {
    Vector y = clip_box(x + p, gamma);
    p = x + p - y;
    Vector next = project_shifted_l1(y + q, shift, t);
    q = y + q - next;
    double move = (next - x).norm();
    x = std::move(next);
    if (move < tol) break;
  }
  Vector r = clip_box(x, gamma);
  if ((shift + r).lpNorm<1>() <= t + tol || feasible == nullptr) return r;

  // Pull back toward the known feasible point until the l1 constraint holds.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    Vector c = *feasible + mid * (r - *feasible);
    if ((shift + c).lpNorm<1>() <= t)
      lo = mid;
    else
      hi = mid;
  }
  return *feasible + lo * (r - *feasible);
}

// ---------------------------------------------------------------------------

namespace {

double largest_eigenvalue(const Matrix& q) {
  const auto d = q.rows();
  if (d == 0) return 0.0;
  if (d <= 8) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(q, Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
  }
  // power iteration for larger problems
  Vector v = Vector::Ones(d).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vector next = q * v;
    double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    double rayleigh = next.dot(q * next);
    v = std::move(next);
    if (std::abs(rayleigh - lambda) <= 1e-12 * std::abs(rayleigh)) return rayleigh;
    lambda = rayleigh;
  }
  return lambda;
}

}  // namespace

Vector best_response(const CenteredQuadratic& env, const Vector& others_sum, const GameConfig& cfg,
                     const Vector* warm_start) {
  const auto d = static_cast<Eigen::Index>(env.dim());
  if (others_sum.size() != d) throw ConfigError("others_sum has wrong dimension");
  if (!others_sum.allFinite()) throw ConfigError("others_sum must be finite");

  auto project = [&](const Vector& v, const Vector* anchor) {
    return project_box_l1(v, others_sum, cfg.gamma, cfg.t, cfg.dykstra_sweeps, cfg.dykstra_tol, anchor);
  };
  auto objective = [&](const Vector& w) { return env.objective(others_sum + w); };

  Vector w = warm_start ? project(*warm_start, nullptr) : project(Vector::Zero(d), nullptr);
  const double lipschitz = 2.0 * largest_eigenvalue(env.q);
  if (lipschitz <= 0.0) return w;

  double f = objective(w);
  int rising = 0;
  for (std::size_t it = 0; it < cfg.inner_max_iters; ++it) {
    Vector grad = 2.0 * (env.q * (others_sum + w) - env.b);
    Vector next = project(w - grad / lipschitz, &w);
    double f_next = objective(next);
    double move = (next - w).norm();
    if (f_next > f + 1e-12 * std::max(1.0, std::abs(f))) {
      if (++rising >= 10) throw InnerDivergence("best-response objective rose for 10 consecutive steps");
    } else {
      rising = 0;
    }
    w = std::move(next);
    f = f_next;
    if (move < cfg.inner_tol) break;
  }

  Vector zero = Vector::Zero(d);
  if (in_set(zero, others_sum, cfg.gamma, cfg.t, 0.0) && objective(zero) < f) return zero;
  return w;
}

Vector best_response(const SampleSet& env, const Vector& others_sum, const GameConfig& cfg) {
  return best_response(CenteredQuadratic::from(env), others_sum, cfg);
}

Game::Game(const EnvironmentSet& es, GameConfig cfg) : es_(es), cfg_(cfg) {
  cfg_.validate();
  if (es.k() != cfg_.k) throw ConfigError("environment count does not match game config k");
  for (const auto& env : es.envs) quads_.push_back(CenteredQuadratic::from(env));
  const auto d = static_cast<Eigen::Index>(es.dim());
  state_.w_tilde.assign(es.k(), Vector::Zero(d));
}

double Game::round() {
  double delta = 0.0;
  Vector total = state_.sum();
  for (std::size_t i = 0; i < quads_.size(); ++i) {
    Vector prev = state_.w_tilde[i];
    Vector others = total - prev;
    Vector next = best_response(quads_[i], others, cfg_, &prev);
    delta = std::max(delta, (prev - next).norm());
    total = others + next;
    state_.w_tilde[i] = std::move(next);
  }
  state_.max_delta_history.push_back(delta);
  ++state_.rounds_used;
  return delta;
}

const PlayerState& Game::run() {
  while (state_.rounds_used < cfg_.max_rounds) {
    if (round() < cfg_.epsilon) {
      state_.converged = true;
      break;
    }
  }
  return state_;
}

Attribution Game::attribution() const {
  Attribution a;
  a.coefficients = state_.sum();
  a.intercept = weighted_intercept(es_.base, a.coefficients);
  a.refresh_support();
  return a;
}

GameResult play_game(const EnvironmentSet& es, const GameConfig& cfg) {
  Game game(es, cfg);
  game.run();
  return {game.attribution(), game.state()};
}

// ---------------------------------------------------------------------------

double ne_oracle_two(double a, double b) {
  if (a * b < 0.0) return 0.0;
  return std::abs(b) >= std::abs(a) ? a : b;
}

Vector ne_oracle_two(const Vector& w1_star, const Vector& w2_star) {
  if (w1_star.size() != w2_star.size()) throw ConfigError("oracle inputs differ in length");
  Vector out(w1_star.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = ne_oracle_two(w1_star[i], w2_star[i]);
  return out;
}

Vector ne_oracle_multi(const std::vector<Vector>& w_stars) {
  if (w_stars.size() < 2) throw ConfigError("oracle needs at least two environments");
  const auto d = w_stars.front().size();
  const std::size_t k = w_stars.size();
  Vector out(d);
  std::vector<double> col(k);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      if (w_stars[i].size() != d) throw ConfigError("oracle inputs differ in length");
      col[i] = w_stars[i][j];
    }
    std::sort(col.begin(), col.end());
    out[j] = k % 2 == 1 ? col[k / 2] : ne_oracle_two(col[k / 2 - 1], col[k / 2]);
  }
  return out;
}

// ---------------------------------------------------------------------------

LassoPath weighted_lasso_path(const SampleSet& samples, std::size_t n_lambdas, double min_ratio) {
  auto c = center(samples);
  const auto d = c.x.cols();
  LassoPath path;
  if (n_lambdas == 0) return path;

  Vector z = (c.x.array().square().colwise() * c.w.array()).colwise().sum().transpose();
  Vector corr = c.x.transpose() * (c.w.array() * c.y.array()).matrix();
  const double lambda_max = corr.cwiseAbs().maxCoeff();

  Vector beta = Vector::Zero(d);
  Vector resid = c.y;
  for (std::size_t l = 0; l < n_lambdas; ++l) {
    double frac = n_lambdas == 1 ? 0.0 : static_cast<double>(l) / static_cast<double>(n_lambdas - 1);
    double lambda = lambda_max * std::pow(min_ratio, frac);
    if (lambda_max > 0.0) {
      for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
          if (z[j] <= 0.0) continue;
          double old = beta[j];
          double rho = (c.w.array() * c.x.col(j).array() * resid.array()).sum() + z[j] * old;
          double updated = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / z[j];
          if (updated != old) {
            resid -= (updated - old) * c.x.col(j);
            beta[j] = updated;
            max_change = std::max(max_change, std::abs(updated - old) * std::sqrt(z[j]));
          }
        }
        if (max_change <= 1e-12 * std::max(1.0, std::sqrt(c.w.dot(c.y.cwiseAbs2())))) break;
      }
    }
    path.lambdas.push_back(lambda);
    path.coefs.push_back(beta);
  }
  return path;
}

std::vector<std::size_t> select_features(const SampleSet& samples, std::size_t K) {
  if (samples.empty()) throw ConfigError("cannot select features on an empty sample set");
  const auto d = static_cast<std::size_t>(samples.front().features.size());
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), 0);
  if (K >= d) return all;

  auto path = weighted_lasso_path(samples);
  auto active = [](const Vector& b) {
    std::vector<std::size_t> idx;
    for (Eigen::Index j = 0; j < b.size(); ++j)
      if (b[j] != 0.0) idx.push_back(static_cast<std::size_t>(j));
    return idx;
  };
  for (const auto& b : path.coefs) {
    auto idx = active(b);
    if (idx.size() < K) continue;
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto c) { return std::abs(b[static_cast<Eigen::Index>(a)]) > std::abs(b[static_cast<Eigen::Index>(c)]); });
    idx.resize(K);
    std::sort(idx.begin(), idx.end());
    return idx;
  }
  return path.coefs.empty() ? std::vector<std::size_t>{} : active(path.coefs.back());
}

std::vector<std::size_t> sparsify(const EnvironmentSet& es, std::size_t K, std::optional<double> ridge_alt) {
  if (ridge_alt) {
    std::vector<std::size_t> all(es.dim());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  return select_features(es.base, std::min(K, es.dim()));
}

double default_gamma(const EnvironmentSet& es, std::size_t K) {
  LimeConfig cfg;
  cfg.K = K;
  double gamma = 0.0;
  for (const auto& env : es.envs) {
    auto a = lime_explain(env, cfg);
    if (a.coefficients.size() > 0) gamma = std::max(gamma, a.coefficients.cwiseAbs().maxCoeff());
  }
  if (!(gamma > 0.0)) throw DegenerateGamma("every per-environment coefficient is zero");
  return gamma;
}

}  // namespace linex
