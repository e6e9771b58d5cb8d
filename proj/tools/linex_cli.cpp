// linex: explain, benchmark, oracle-check and sweep from a JSON config.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "linex/experiment.hpp"
#include "linex/oracle.hpp"

namespace fs = std::filesystem;
using namespace linex;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::vector<std::string> methods;
  std::optional<std::string> axis;
};

RunConfig load_config(const Overrides& o) {
  std::ifstream in(o.config);
  if (!in) throw IoError("cannot open config '" + o.config + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + o.config + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg = RunConfig::from_json(doc);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) cfg.methods.push_back(parse_method(m));
  }
  if (o.axis) cfg.axis = *o.axis;
  cfg.validate();
  return cfg;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Only "header" varies between identical runs.
std::string wrap_report(const json& body, const std::string& command) {
  json doc;
  doc["header"] = {{"generated_at", utc_now()}, {"command", command}};
  doc["body"] = body;
  return doc.dump(2) + "\n";
}

void warn_nonconverged(const std::vector<Explanation>& ex) {
  std::size_t bad = 0;
  for (const auto& e : ex) bad += e.converged ? 0 : 1;
  if (bad > 0) std::cerr << "warning: " << bad << " explanation(s) hit max_rounds without converging\n";
}

int cmd_explain(const Overrides& o) {
  auto cfg = load_config(o);
  auto p = prepare(cfg);
  auto dir = ensure_dir(cfg.out_dir);
  auto run = run_method(p, cfg, cfg.methods.front(), cfg.n, cfg.k, cfg.tau);
  std::ostringstream lines;
  for (std::size_t i = 0; i < run.explanations.size(); ++i)
    lines << explanation_record(p, i, run.explanations[i]).dump() << '\n';
  write_file(dir / "explanations.jsonl", lines.str());
  warn_nonconverged(run.explanations);
  std::cout << "wrote " << run.explanations.size() << " explanations to " << (dir / "explanations.jsonl").string()
            << '\n';
  return 0;
}

int cmd_benchmark(const Overrides& o) {
  auto cfg = load_config(o);
  auto p = prepare(cfg);
  auto dir = ensure_dir(cfg.out_dir);
  auto result = run_benchmark(p, cfg);
  write_file(dir / "metrics.csv", metrics_csv(result, cfg));
  write_file(dir / "report.json", wrap_report(result.report, "benchmark"));
  for (const auto& r : result.runs) warn_nonconverged(r.explanations);

  for (const auto& [method, summary] : result.report["summary"].items()) {
    std::cout << method;
    for (const auto& [metric, v] : summary.items())
      if (v.is_object())
        std::cout << "  " << metric << "=" << v["mean"].get<double>() << "±" << v["sem"].get<double>();
    std::cout << '\n';
  }
  for (const auto& c : result.comparisons)
    std::cout << c.method_a << " vs " << c.method_b << " " << c.metric << ": p="
              << (c.p_value ? format_double(*c.p_value) : std::string("n/a")) << '\n';
  return 0;
}

int cmd_sweep(const Overrides& o) {
  auto cfg = load_config(o);
  auto p = prepare(cfg);
  auto dir = ensure_dir(cfg.out_dir);
  auto rows = run_sweep(p, cfg);
  write_file(dir / ("sweep_" + cfg.axis + ".csv"), sweep_csv(rows));
  std::cout << "wrote " << rows.size() << " rows to " << (dir / ("sweep_" + cfg.axis + ".csv")).string() << '\n';
  return 0;
}

struct OracleArgs {
  std::size_t dim = 3;
  std::size_t trials = 200;
  std::vector<std::size_t> ks{2, 3, 4, 5};
  std::optional<double> gamma;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
};

int cmd_oracle(const OracleArgs& a) {
  OracleOptions opts;
  opts.dim = a.dim;
  opts.trials = a.trials;
  opts.k_values = a.ks;
  opts.gamma = a.gamma;
  opts.seed = RngSeed{a.seed};
  auto report = oracle_check(opts);
  if (report.vacuous) std::cerr << "warning: trials=0, nothing was checked\n";

  json body = json::array();
  for (const auto& r : report.per_k) {
    std::cout << "k=" << r.k << " trials=" << r.trials << " checked=" << r.checked
              << " max_deviation=" << format_double(r.max_deviation);
    if (r.k == 2) std::cout << " opposite_sign=" << r.opposite_sign << " same_sign=" << r.same_sign;
    std::cout << " out_of_regime=" << r.out_of_regime << " nonconverged=" << r.nonconverged << " "
              << (r.passed ? "PASS" : "FAIL") << '\n';
    body.push_back({{"k", r.k}, {"trials", r.trials}, {"checked", r.checked}, {"max_deviation", r.max_deviation},
                    {"opposite_sign", r.opposite_sign}, {"same_sign", r.same_sign},
                    {"out_of_regime", r.out_of_regime}, {"nonconverged", r.nonconverged}, {"passed", r.passed}});
  }
  if (a.out) {
    auto dir = ensure_dir(*a.out);
    write_file(dir / "oracle_report.json", wrap_report({{"dim", a.dim}, {"seed", a.seed}, {"results", body}}, "oracle-check"));
  }
  return report.passed() ? 0 : 1;
}

void add_run_flags(CLI::App* sub, Overrides& o, bool with_axis) {
  sub->add_option("--config", o.config, "JSON run config")->required();
  sub->add_option("--seed", o.seed, "override seed");
  sub->add_option("--out", o.out, "override output directory");
  sub->add_option("--workers", o.workers, "worker threads (0 = all cores)");
  sub->add_option("--method", o.methods, "override method list (linex, lime, slime)");
  if (with_axis) sub->add_option("--axis", o.axis, "ablated axis: n, k or tau");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locally invariant explanations for black-box models"};
  app.require_subcommand(1);

  Overrides explain_o, bench_o, sweep_o;
  OracleArgs oracle_a;
  auto* explain = app.add_subcommand("explain", "explain every test example, write explanations.jsonl");
  add_run_flags(explain, explain_o, false);
  auto* bench = app.add_subcommand("benchmark", "all methods over the tau grid, write metrics.csv and report.json");
  add_run_flags(bench, bench_o, false);
  auto* sweep = app.add_subcommand("sweep", "one-axis ablation, write long-form CSV");
  add_run_flags(sweep, sweep_o, true);
  auto* oracle = app.add_subcommand("oracle-check", "compare the game against its closed-form equilibria");
  oracle->add_option("--dim", oracle_a.dim, "feature dimension");
  oracle->add_option("--trials", oracle_a.trials, "random trials per k");
  oracle->add_option("--k", oracle_a.ks, "environment counts")->delimiter(',');
  oracle->add_option("--gamma", oracle_a.gamma, "l_inf bound (default 1)");
  oracle->add_option("--seed", oracle_a.seed, "seed");
  oracle->add_option("--out", oracle_a.out, "directory for oracle_report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorClass::config);
  }

  try {
    if (*explain) return cmd_explain(explain_o);
    if (*bench) return cmd_benchmark(bench_o);
    if (*sweep) return cmd_sweep(sweep_o);
    if (*oracle) return cmd_oracle(oracle_a);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
