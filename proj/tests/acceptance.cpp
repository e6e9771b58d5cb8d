// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "linex/baselines.hpp"
#include "linex/experiment.hpp"
#include "linex/metrics.hpp"
#include "linex/oracle.hpp"
#include "linex/solver.hpp"
#include "oracles.hpp"

using namespace linex;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<double> stdvec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::vector<oracle::Point> to_points(const SampleSet& s) {
  std::vector<oracle::Point> out;
  for (const auto& p : s) out.push_back({stdvec(p.features), p.target, p.weight});
  return out;
}

// ---------------------------------------------------------------------------

Outcome two_player_oracle() {
  OracleOptions o;
  o.dim = 3;
  o.trials = 200;
  o.k_values = {2};
  auto t0 = Clock::now();
  auto rep = oracle_check(o);
  double secs = seconds_since(t0);
  const auto& r = rep.per_k.front();
  bool pass = r.passed && r.max_deviation <= 1e-3 && r.opposite_sign >= 20 && r.same_sign >= 20 && secs < 60.0;
  return {pass, "max_dev=" + fmt(r.max_deviation) + " opposite=" + std::to_string(r.opposite_sign) +
                    " same=" + std::to_string(r.same_sign) + " nonconverged=" + std::to_string(r.nonconverged) +
                    " time=" + fmt(secs, 3) + "s"};
}

Outcome multi_env_oracle() {
  OracleOptions o;
  o.dim = 3;
  o.trials = 200;
  o.k_values = {3, 4};
  auto rep = oracle_check(o);
  bool pass = rep.passed();
  std::string d;
  for (const auto& r : rep.per_k) {
    pass = pass && r.max_deviation <= 1e-3 && r.checked > 0;
    d += "k=" + std::to_string(r.k) + " max_dev=" + fmt(r.max_deviation) + " checked=" + std::to_string(r.checked) + " ";
  }
  return {pass, d};
}

Outcome sign_elimination() {
  const std::size_t dim = 2, axis = 0, runs = 100;
  auto bb = builtin_piecewise_sign(dim, axis, 1.0);
  Example anchor{Vector::Zero(dim), std::nullopt};
  Dataset empty;
  empty.feature_names = {"x0", "x1"};
  empty.task = Task::regression;
  std::size_t small = 0, lime_larger = 0;
  for (std::size_t seed = 0; seed < runs; ++seed) {
    ExplainSettings s;
    s.neighborhood = NeighborhoodKind::random;
    s.n = 10;
    s.k = 2;
    s.tau = 0.75;
    s.K = dim;
    s.seed = RngSeed{seed};
    s.method = Method::linex;
    auto lx = explain_example(anchor, 0, bb, empty, s);
    s.method = Method::lime;
    auto lm = explain_example(anchor, 0, bb, empty, s);
    double a = std::abs(lx.attribution.coefficients[axis]);
    double b = std::abs(lm.attribution.coefficients[axis]);
    small += a < 0.05 * lx.gamma ? 1 : 0;
    lime_larger += b > a ? 1 : 0;
  }
  double f_small = double(small) / runs, f_larger = double(lime_larger) / runs;
  return {f_small >= 0.95 && f_larger >= 0.90,
          "linex_below_0.05gamma=" + fmt(f_small) + " (need 0.95) lime_exceeds=" + fmt(f_larger) + " (need 0.90)"};
}

struct IrisRun {
  RunConfig cfg;
  Prepared prepared;
  BenchmarkResult result;
  double seconds = 0.0;
};

IrisRun& iris() {
  static IrisRun run = [] {
    std::ifstream in(std::string(LINEX_SOURCE_DIR) + "/configs/iris_benchmark.json");
    IrisRun r;
    r.cfg = RunConfig::from_json(json::parse(in));
    r.cfg.dataset = std::string(LINEX_SOURCE_DIR) + "/" + r.cfg.dataset;
    auto t0 = Clock::now();
    r.prepared = prepare(r.cfg);
    r.result = run_benchmark(r.prepared, r.cfg);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

const Comparison* find(const BenchmarkResult& r, const std::string& b, const std::string& metric) {
  for (const auto& c : r.comparisons)
    if (c.method_a == "linex" && c.method_b == b && c.metric == metric) return &c;
  return nullptr;
}

Outcome iris_directional() {
  auto& r = iris();
  double acc = r.prepared.test_accuracy.value_or(0.0);
  const auto* c_ci = find(r.result, "lime", "ci");
  const auto* c_up = find(r.result, "lime", "upsilon");
  const auto* c_cac = find(r.result, "lime", "cac");
  if (!c_ci || !c_up || !c_cac) return {false, "missing comparisons"};
  auto sig = [](const Comparison* c) { return c->p_value && *c->p_value < 0.05; };
  auto p = [](const Comparison* c) { return c->p_value ? fmt(*c->p_value, 3) : std::string("n/a"); };
  bool ci_ok = c_ci->mean_a < c_ci->mean_b && sig(c_ci);
  bool up_ok = c_up->mean_a > c_up->mean_b && sig(c_up);
  bool cac_ok = c_cac->mean_a > c_cac->mean_b && sig(c_cac);
  double ratio = c_ci->mean_b / c_ci->mean_a;
  bool pass = acc >= 0.85 && ci_ok && up_ok && cac_ok && ratio >= 2.0 && r.seconds < 600.0;
  std::string d = "acc=" + fmt(acc, 3) + " CI " + fmt(c_ci->mean_a) + " vs " + fmt(c_ci->mean_b) + " p=" + p(c_ci) +
                  (ci_ok ? " ok" : " wrong") + "; ratio=" + fmt(ratio, 3) + (ratio >= 2.0 ? " ok" : " <2") +
                  "; Upsilon " + fmt(c_up->mean_a) + " vs " + fmt(c_up->mean_b) + " p=" + p(c_up) +
                  (up_ok ? " ok" : " wrong") + "; CAC " + fmt(c_cac->mean_a) + " vs " + fmt(c_cac->mean_b) +
                  " p=" + p(c_cac) + (cac_ok ? " ok" : " wrong") + "; time=" + fmt(r.seconds, 3) + "s";
  return {pass, d};
}

Outcome fidelity_parity() {
  const auto* c = find(iris().result, "lime", "infd");
  if (!c) return {false, "missing comparison"};
  return {c->mean_a <= 1.5 * c->mean_b, "INFD linex=" + fmt(c->mean_a) + " lime=" + fmt(c->mean_b)};
}

Outcome query_parity() {
  const auto& runs = iris().result.runs;
  std::size_t compared = 0, mismatched = 0;
  for (const auto& a : runs) {
    if (a.method != Method::linex) continue;
    for (const auto& b : runs) {
      if (b.method != Method::lime || b.tau != a.tau) continue;
      for (std::size_t i = 0; i < a.explanations.size(); ++i) {
        ++compared;
        if (a.explanations[i].attribution.query_count != b.explanations[i].attribution.query_count) ++mismatched;
      }
    }
  }
  return {compared > 0 && mismatched == 0,
          std::to_string(compared) + " example pairs, " + std::to_string(mismatched) + " mismatched"};
}

// ---------------------------------------------------------------------------

struct Tally {
  std::size_t total = 0, failed = 0;
  std::string first;
  void check(bool ok, const std::string& what) {
    ++total;
    if (!ok && failed++ == 0) first = what;
  }
  Outcome outcome() const {
    return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) + " checks" +
                             (failed ? ", first failure: " + first : "")};
  }
};

Attribution attr(Vector c, double b = 0.0) {
  Attribution a;
  a.coefficients = std::move(c);
  a.intercept = b;
  a.refresh_support();
  return a;
}

Outcome metric_suite() {
  Tally t;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };

  ExplainedSet one;
  one.examples = {{vec({1}), 0.0}};
  one.attributions = {attr(vec({0.5}), 0.3)};
  one.blackbox_values = {1.0};
  t.check(near(infd(one), 0.2), "infd single");
  one.blackbox_values = {0.8};
  t.check(infd(one) == 0.0, "infd exact");

  ExplainedSet pair;
  pair.examples = {{vec({0, 0}), 0.0}, {vec({1, 0}), 0.0}};
  pair.neighbors = {{1}, {0}};
  pair.attributions = {attr(vec({0, 0})), attr(vec({0, 0}), 0.4)};
  pair.blackbox_values = {0.0, 0.2};
  t.check(near(gi(pair), 0.3), "gi pair");
  pair.attributions = {attr(vec({1, 0})), attr(vec({0, 1}))};
  pair.blackbox_values = {0, 0};
  t.check(ci(pair) == 2.0, "ci disjoint");
  pair.attributions = {attr(vec({0.3, -1})), attr(vec({0.3, -1}))};
  t.check(ci(pair) == 0.0, "ci identical");

  ExplainedSet cls;
  cls.task = Task::classification;
  cls.examples = {{vec({1, 2, 3}), 0.0}, {vec({3, 2, 5}), 0.0}, {vec({-1, 0, 2}), 1.0}, {vec({-3, 4, 0}), 1.0}};
  cls.blackbox_values = {0, 0, 0, 0};
  cls.attributions = {attr(vec({2, 2, 4})), attr(vec({6, 6, 12})), attr(vec({-4, 4, 2})), attr(vec({0, 0, 0}))};
  t.check(near(cac(cls, {0, 0, 1, 1}).value, 1.0), "cac perfect");
  for (auto& a : cls.attributions) a.coefficients = -a.coefficients;
  t.check(near(cac(cls, {0, 0, 1, 1}).value, -1.0), "cac negated");

  t.check(upsilon({vec({1, -2}), vec({3, -0.1}), vec({0.5, -7})}) == 1.0, "upsilon 1");
  t.check(upsilon({vec({1, -2}), vec({-1, 2})}) == 0.0, "upsilon 0");
  t.check(upsilon({vec({0, 0})}) == 0.0, "upsilon zeros");
  t.check(near(upsilon({vec({1, 1}), vec({1, 1}), vec({-1, 1})}), 2.0 / 3.0), "upsilon 2/3");

  std::vector<double> a{1, 1, 1, 1, -1}, b{0, 0, 0, 0, 0};
  t.check(near(paired_t_test(a, b), oracle::paired_t_p(a, b)), "paired t");
  bool threw = false;
  try {
    paired_t_test({1, 2}, {1, 2});
  } catch (const DegenerateVariance&) {
    threw = true;
  }
  t.check(threw, "degenerate t");
  return t.outcome();
}

SampleSet random_env(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.1, 1.0);
  SampleSet s;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(static_cast<Eigen::Index>(d));
    for (auto& v : x) v = g(rng);
    s.push_back({x, g(rng), u(rng)});
  }
  return s;
}

EnvironmentSet from_envs(std::vector<SampleSet> envs) {
  EnvironmentSet es;
  es.anchor.features = Vector::Zero(envs.front().front().features.size());
  for (auto& e : envs) {
    es.base.insert(es.base.end(), e.begin(), e.end());
    es.envs.push_back(std::move(e));
  }
  return es;
}

Outcome solver_suite() {
  Tally t;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t d = trial % 2 == 0 ? 1 : 2;
    SampleSet env = random_env(12, d, 100 + trial);
    Vector others(static_cast<Eigen::Index>(d));
    for (auto& x : others) x = u(rng);
    GameConfig cfg;
    cfg.gamma = 0.5 + 0.5 * (u(rng) + 1.0);
    cfg.t = others.lpNorm<1>() * 0.5 + 0.3;
    cfg.inner_max_iters = 5000;
    cfg.inner_tol = 1e-12;
    Vector br = best_response(env, others, cfg);
    t.check(br.lpNorm<Eigen::Infinity>() <= cfg.gamma + 1e-8, "best response box");
    t.check((others + br).lpNorm<1>() <= cfg.t + 1e-8, "best response l1");
    double mine = oracle::centered_sse(to_points(env), stdvec(others), stdvec(br));
    double grid = oracle::grid_min(to_points(env), stdvec(others), cfg.gamma, cfg.t, d == 1 ? 200001 : 1501);
    t.check(mine <= grid * (1.0 + 1e-6) + 1e-12, "grid optimality");
  }

  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto es = from_envs({random_env(15, 3, seed * 3), random_env(15, 3, seed * 3 + 1), random_env(15, 3, seed * 3 + 2)});
    GameConfig cfg;
    cfg.k = 3;
    cfg.gamma = 0.4;
    cfg.t = 0.7;
    cfg.max_rounds = 400;
    Game game(es, cfg);
    const auto& st = game.run();
    for (const auto& w : st.w_tilde) t.check(w.lpNorm<Eigen::Infinity>() <= cfg.gamma + cfg.inner_tol, "game box");
    t.check(st.sum().lpNorm<1>() <= cfg.t + cfg.inner_tol, "game l1");
    if (st.converged) {
      auto before = st.w_tilde;
      game.round();
      for (std::size_t i = 0; i < before.size(); ++i)
        t.check((game.state().w_tilde[i] - before[i]).norm() <= cfg.epsilon, "fixed point");
    }
  }

  Vector w = vec({0.5, -0.25});
  SampleSet env = random_env(30, 2, 6);
  for (auto& p : env) {
    p.target = w.dot(p.features) + 1.0;
    p.weight = 1.0;
  }
  auto es = from_envs({env, env});
  GameConfig cfg;
  cfg.gamma = 10;
  cfg.t = 20;
  cfg.inner_tol = 1e-13;
  cfg.inner_max_iters = 5000;
  auto r = play_game(es, cfg);
  t.check((r.attribution.coefficients - w).lpNorm<Eigen::Infinity>() < 1e-8, "linear recovery");
  t.check(std::abs(r.attribution.intercept - 1.0) < 1e-8, "intercept recovery");
  return t.outcome();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"two-player oracle equivalence (d=3, 200 trials, k=2)", two_player_oracle},
      {"multi-environment rules (k=3 median, k=4 middle pair)", multi_env_oracle},
      {"sign elimination on piecewise_sign", sign_elimination},
      {"IRIS directional: CI, Upsilon, CAC vs LIME", iris_directional},
      {"IRIS fidelity parity: INFD(linex) <= 1.5 INFD(lime)", fidelity_parity},
      {"query parity: linex and lime ledgers equal per example", query_parity},
      {"metric unit suite", metric_suite},
      {"solver property suite", solver_suite},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
