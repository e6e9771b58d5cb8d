#include "linex/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "linex/solver.hpp"

namespace linex {

bool OracleReport::passed() const {
  return std::all_of(per_k.begin(), per_k.end(), [](const OracleKReport& r) { return r.passed; });
}

EnvironmentSet diagonal_environments(const std::vector<Vector>& w_stars, std::size_t n, RngSeed seed) {
  if (w_stars.empty()) throw ConfigError("need at least one environment");
  const auto d = w_stars.front().size();
  if (static_cast<Eigen::Index>(n) <= d) throw ConfigError("need more samples than features");
  std::mt19937_64 rng(seed.value);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);

  EnvironmentSet es;
  es.anchor.features = Vector::Zero(d);
  for (const auto& w : w_stars) {
    Matrix x(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < d; ++c) x(r, c) = gauss(rng);
    x.rowwise() -= x.colwise().mean();
    Eigen::HouseholderQR<Matrix> qr(x);
    Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), d);
    q *= std::sqrt(static_cast<double>(n));
    const double c0 = offset(rng);
    SampleSet env;
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      Vector row = q.row(r).transpose();
      env.push_back({row, row.dot(w) + c0, 1.0});
    }
    es.base.insert(es.base.end(), env.begin(), env.end());
    es.envs.push_back(std::move(env));
  }
  return es;
}

bool in_closed_form_regime(const std::vector<double>& entries, double gamma) {
  if (entries.size() == 2 && entries[0] * entries[1] < 0.0) return true;
  return std::all_of(entries.begin(), entries.end(), [gamma](double v) { return std::abs(v) <= gamma; });
}

OracleReport oracle_check(const OracleOptions& opts) {
  if (opts.dim == 0) throw ConfigError("oracle check needs d >= 1");
  OracleReport report;
  report.vacuous = opts.trials == 0;
  const std::size_t n = opts.samples_per_env > 0 ? opts.samples_per_env : std::max<std::size_t>(20, 4 * opts.dim);
  const double gamma = opts.gamma.value_or(1.0);
  const auto d = static_cast<Eigen::Index>(opts.dim);

  for (auto k : opts.k_values) {
    if (k < 2) throw ConfigError("oracle check needs k >= 2");
    OracleKReport r;
    r.k = k;
    r.trials = opts.trials;
    const RngSeed kseed = opts.seed.derive(k);
    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
      const RngSeed tseed = kseed.derive(trial);
      std::mt19937_64 rng(tseed.value);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      std::vector<Vector> w_stars(k, Vector(d));
      for (auto& w : w_stars)
        for (Eigen::Index j = 0; j < d; ++j) w[j] = unif(rng);

      auto es = diagonal_environments(w_stars, n, tseed.derive(1));
      GameConfig cfg;
      cfg.k = k;
      cfg.gamma = gamma;
      cfg.t = gamma * static_cast<double>(opts.dim);
      cfg.epsilon = 1e-10;
      cfg.max_rounds = opts.max_rounds;
      auto result = play_game(es, cfg);
      if (!result.state.converged) ++r.nonconverged;
      const Vector got = result.state.sum();
      const Vector want = k == 2 ? ne_oracle_two(w_stars[0], w_stars[1]) : ne_oracle_multi(w_stars);

      for (Eigen::Index j = 0; j < d; ++j) {
        std::vector<double> entries;
        for (const auto& w : w_stars) entries.push_back(w[j]);
        if (!in_closed_form_regime(entries, gamma)) {
          ++r.out_of_regime;
          continue;
        }
        if (k == 2) (entries[0] * entries[1] < 0.0 ? r.opposite_sign : r.same_sign)++;
        ++r.checked;
        r.max_deviation = std::max(r.max_deviation, std::abs(got[j] - want[j]));
      }
    }
    r.passed = r.max_deviation <= opts.tolerance;
    report.per_k.push_back(r);
  }
  return report;
}

}  // namespace linex
