#include "linex/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

namespace linex {

// ---------------------------------------------------------------------------
// Config parsing

namespace {

template <typename T>
T get_as(const json& doc, const std::string& key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key)) throw ConfigError("unknown " + where + " field '" + key + "'");
}

template <typename T>
void read(const json& doc, const std::string& key, T& out) {
  if (doc.contains(key)) out = get_as<T>(doc, key);
}

template <typename T>
void read(const json& doc, const std::string& key, std::optional<T>& out) {
  if (doc.contains(key) && !doc.at(key).is_null()) out = get_as<T>(doc, key);
}

BlackBoxSpec parse_blackbox(const json& doc) {
  if (!doc.is_object()) throw ConfigError("'blackbox' must be an object");
  reject_unknown(doc,
                 {"type", "trees", "max_depth", "weights", "intercept", "axis", "magnitude", "command",
                  "timeout_seconds", "max_batch_rows", "class_of_interest"},
                 "blackbox");
  BlackBoxSpec s;
  read(doc, "type", s.type);
  read(doc, "trees", s.trees);
  read(doc, "max_depth", s.max_depth);
  read(doc, "weights", s.weights);
  read(doc, "intercept", s.intercept);
  read(doc, "axis", s.axis);
  read(doc, "magnitude", s.magnitude);
  read(doc, "command", s.command);
  read(doc, "timeout_seconds", s.timeout_seconds);
  read(doc, "max_batch_rows", s.max_batch_rows);
  read(doc, "class_of_interest", s.class_of_interest);
  return s;
}

json blackbox_json(const BlackBoxSpec& s) {
  json j{{"type", s.type}};
  if (s.type == "forest") {
    j["trees"] = s.trees;
    j["max_depth"] = s.max_depth;
  } else if (s.type == "linear") {
    j["weights"] = s.weights;
    j["intercept"] = s.intercept;
  } else if (s.type == "piecewise_sign") {
    j["axis"] = s.axis;
    j["magnitude"] = s.magnitude;
  } else if (s.type == "subprocess") {
    j["command"] = s.command;
    j["timeout_seconds"] = s.timeout_seconds;
    j["max_batch_rows"] = s.max_batch_rows;
  }
  if (s.class_of_interest) j["class_of_interest"] = *s.class_of_interest;
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc,
                 {"schema_version", "dataset", "label_column", "task", "test_fraction", "blackbox", "methods",
                  "neighborhood", "n", "sigma", "bandwidth", "k", "tau", "tau_grid", "n_grid", "k_grid", "K",
                  "ridge_alt", "exemplar_k", "gamma", "t", "epsilon", "max_rounds", "upsilon_resamples", "seed",
                  "out_dir", "workers", "axis"},
                 "config");
  int version = kSchemaVersion;
  read(doc, "schema_version", version);
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");

  RunConfig c;
  read(doc, "dataset", c.dataset);
  read(doc, "label_column", c.label_column);
  if (doc.contains("task")) c.task = parse_task(get_as<std::string>(doc, "task"));
  read(doc, "test_fraction", c.test_fraction);
  if (doc.contains("blackbox")) c.blackbox = parse_blackbox(doc.at("blackbox"));
  if (doc.contains("methods")) {
    c.methods.clear();
    for (const auto& m : get_as<std::vector<std::string>>(doc, "methods")) c.methods.push_back(parse_method(m));
  }
  if (doc.contains("neighborhood")) c.neighborhood = parse_neighborhood(get_as<std::string>(doc, "neighborhood"));
  read(doc, "n", c.n);
  read(doc, "sigma", c.sigma);
  read(doc, "bandwidth", c.bandwidth);
  read(doc, "k", c.k);
  read(doc, "tau", c.tau);
  read(doc, "tau_grid", c.tau_grid);
  read(doc, "n_grid", c.n_grid);
  read(doc, "k_grid", c.k_grid);
  read(doc, "K", c.K);
  read(doc, "ridge_alt", c.ridge_alt);
  read(doc, "exemplar_k", c.exemplar_k);
  read(doc, "gamma", c.gamma);
  read(doc, "t", c.t);
  read(doc, "epsilon", c.epsilon);
  read(doc, "max_rounds", c.max_rounds);
  read(doc, "upsilon_resamples", c.upsilon_resamples);
  read(doc, "seed", c.seed);
  read(doc, "out_dir", c.out_dir);
  read(doc, "workers", c.workers);
  read(doc, "axis", c.axis);
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["dataset"] = dataset;
  if (label_column) j["label_column"] = *label_column;
  j["task"] = to_string(task);
  j["test_fraction"] = test_fraction;
  j["blackbox"] = blackbox_json(blackbox);
  json ms = json::array();
  for (auto m : methods) ms.push_back(to_string(m));
  j["methods"] = ms;
  j["neighborhood"] = to_string(neighborhood);
  j["n"] = n;
  if (sigma) j["sigma"] = *sigma;
  j["bandwidth"] = bandwidth;
  j["k"] = k;
  j["tau"] = tau;
  j["tau_grid"] = tau_grid;
  j["n_grid"] = effective_n_grid();
  j["k_grid"] = effective_k_grid();
  j["K"] = K;
  if (ridge_alt) j["ridge_alt"] = *ridge_alt;
  j["exemplar_k"] = exemplar_k;
  if (gamma) j["gamma"] = *gamma;
  if (t) j["t"] = *t;
  j["epsilon"] = epsilon;
  j["max_rounds"] = max_rounds;
  j["upsilon_resamples"] = upsilon_resamples;
  j["seed"] = seed;
  j["axis"] = axis;
  return j;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("config needs a 'dataset' path");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0,1)");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (tau_grid.empty()) throw ConfigError("tau_grid must not be empty");
  for (double v : tau_grid)
    if (!(v > 0.0)) throw ConfigError("tau_grid entries must be positive");
  for (auto v : effective_n_grid())
    if (v < 2) throw ConfigError("neighborhood sizes must be at least 2");
  for (auto v : effective_k_grid())
    if (v < 2) throw ConfigError("environment counts must be at least 2");
  if (exemplar_k < 1) throw ConfigError("exemplar_k must be at least 1");
  if (axis != "n" && axis != "k" && axis != "tau") throw ConfigError("axis must be one of n, k, tau");
  if (sigma && !(*sigma > 0.0)) throw ConfigError("sigma must be positive");
  settings(methods.front(), n, k, tau).validate(1);

  const auto& b = blackbox;
  if (b.type == "linear") {
    if (b.weights.empty()) throw ConfigError("linear black-box needs 'weights'");
  } else if (b.type == "subprocess") {
    if (b.command.empty()) throw ConfigError("subprocess black-box needs 'command'");
    if (!(b.timeout_seconds > 0.0)) throw ConfigError("timeout_seconds must be positive");
    if (b.max_batch_rows == 0) throw ConfigError("max_batch_rows must be positive");
  } else if (b.type == "forest") {
    if (b.trees == 0 || b.max_depth == 0) throw ConfigError("forest needs positive trees and max_depth");
  } else if (b.type != "piecewise_sign") {
    throw ConfigError("unknown black-box type '" + b.type + "'");
  }
}

ExplainSettings RunConfig::settings(Method method, std::size_t n_, std::size_t k_, double tau_) const {
  ExplainSettings s;
  s.method = method;
  s.neighborhood = neighborhood;
  s.n = n_;
  s.bandwidth = bandwidth;
  s.k = k_;
  s.tau = tau_;
  s.K = K;
  s.ridge_alt = ridge_alt;
  s.gamma = gamma;
  s.t = t;
  s.epsilon = epsilon;
  s.max_rounds = max_rounds;
  s.seed = RngSeed{seed};
  return s;
}

// ---------------------------------------------------------------------------
// Preparation

BlackBoxSelector Prepared::selector() const {
  return [this](std::size_t i) { return per_example.at(i); };
}

Prepared prepare(const RunConfig& cfg) {
  cfg.validate();
  Prepared p;
  Dataset full = load_csv(cfg.dataset, cfg.task, cfg.label_column);
  auto [train, test] = train_test_split(full, cfg.test_fraction, RngSeed{cfg.seed}.derive(0xDA7A));
  if (test.size() <= cfg.exemplar_k) throw ConfigError("test split too small for exemplar_k");
  p.train_raw = std::move(train);
  p.test_raw = std::move(test);
  p.scaler = Standardizer::fit(p.train_raw);
  p.train = p.scaler.transform(p.train_raw);
  p.test = p.scaler.transform(p.test_raw);
  const auto d = full.dim();

  const auto& b = cfg.blackbox;
  if (b.type == "forest") {
    ForestParams fp;
    fp.trees = b.trees;
    fp.max_depth = b.max_depth;
    fp.seed = RngSeed{cfg.seed}.derive(0xF0);
    p.forest = RandomForest::train(p.train_raw, fp);
    if (cfg.task == Task::classification) p.test_accuracy = p.forest->accuracy(p.test_raw);
  } else if (b.type == "linear") {
    if (b.weights.size() != d) throw ConfigError("linear black-box weights do not match dataset dimension");
    p.raw_blackbox = builtin_linear(Eigen::Map<const Vector>(b.weights.data(), static_cast<Eigen::Index>(b.weights.size())), b.intercept);
  } else if (b.type == "piecewise_sign") {
    p.raw_blackbox = builtin_piecewise_sign(d, b.axis, b.magnitude);
  } else {
    SubprocessOptions so;
    so.timeout = std::chrono::milliseconds(static_cast<long>(b.timeout_seconds * 1000.0));
    so.max_batch_rows = b.max_batch_rows;
    so.class_of_interest = b.class_of_interest;
    auto child = subprocess_blackbox(b.command, so);
    if (child->dimension() != d)
      throw ProtocolError("subprocess reports d=" + std::to_string(child->dimension()) + " but dataset has " +
                          std::to_string(d) + " features");
    p.raw_blackbox = child;
  }

  for (std::size_t i = 0; i < p.test.size(); ++i) {
    BlackBoxPtr raw = p.raw_blackbox;
    if (p.forest) {
      std::optional<std::size_t> cls = b.class_of_interest;
      if (!cls && p.forest->task() == Task::classification) cls = p.forest->predict_class(p.test_raw.examples[i].features);
      raw = forest_channel(p.forest, cls);
    }
    p.per_example.push_back(standardized_view(raw, p.scaler));
  }
  p.blackbox_values.resize(p.test.size());
  for (std::size_t i = 0; i < p.test.size(); ++i)
    p.blackbox_values[i] = p.per_example[i]->predict(p.test.examples[i].features);
  p.neighbors = exemplar_neighbors(p.test, cfg.exemplar_k);
  return p;
}

// ---------------------------------------------------------------------------
// Metrics

ExplainedSet explained_set(const Prepared& p, const std::vector<Explanation>& explanations) {
  ExplainedSet es;
  es.examples = p.test.examples;
  es.task = p.test.task;
  es.blackbox_values = p.blackbox_values;
  es.neighbors = p.neighbors;
  for (const auto& e : explanations) es.attributions.push_back(e.attribution);
  return es;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

MetricValues evaluate(const Prepared& p, const RunConfig& cfg, const std::vector<Explanation>& explanations) {
  auto es = explained_set(p, explanations);
  MetricValues m;
  m.infd_terms = infd_terms(es);
  m.gi_terms = gi_terms(es);
  m.ci_terms = ci_terms(es);
  m.upsilon_terms = upsilon_neighbor_terms(es);
  m.infd = mean_of(m.infd_terms);
  m.gi = mean_of(m.gi_terms);
  m.ci = mean_of(m.ci_terms);
  m.upsilon = mean_of(m.upsilon_terms);
  if (es.task == Task::classification) {
    std::vector<std::size_t> labels;
    bool labeled = true;
    for (const auto& ex : p.test.examples) {
      if (!ex.label) labeled = false;
      labels.push_back(ex.label ? static_cast<std::size_t>(*ex.label) : 0);
    }
    if (labeled) {
      try {
        auto r = cac(es, labels);
        m.cac = r.value;
        m.cac_skipped = r.skipped_classes;
      } catch (const DegenerateClass&) {
        m.cac_skipped.clear();
        for (std::size_t c = 0; c < p.test.class_count(); ++c) m.cac_skipped.push_back(c);
      }
    }
  }
  for (const auto& e : explanations)
    if (!e.converged) ++m.nonconverged;
  (void)cfg;
  return m;
}

MethodRun run_method(const Prepared& p, const RunConfig& cfg, Method method, std::size_t n, std::size_t k,
                     double tau) {
  MethodRun r;
  r.method = method;
  r.n = n;
  r.k = k;
  r.tau = tau;
  auto s = cfg.settings(method, n, k, tau);
  if (cfg.sigma) s.sigma = Vector::Constant(static_cast<Eigen::Index>(p.test.dim()), *cfg.sigma);
  r.explanations = explain_all_parallel(p.test.examples, p.selector(), p.train, s, cfg.workers);
  r.metrics = evaluate(p, cfg, r.explanations);
  if (cfg.upsilon_resamples > 0) {
    r.metrics.upsilon_resampled_terms.resize(p.test.size());
    for (std::size_t i = 0; i < p.test.size(); ++i)
      r.metrics.upsilon_resampled_terms[i] =
          upsilon_resampled(p.test.examples[i], i, p.per_example[i], p.train, s, cfg.upsilon_resamples);
    r.metrics.upsilon_resampled = mean_of(r.metrics.upsilon_resampled_terms);
  }
  return r;
}

std::vector<std::string> metric_names(Task task, bool with_resampled) {
  std::vector<std::string> names{"infd", "gi", "ci", "upsilon"};
  if (with_resampled) names.push_back("upsilon_resampled");
  if (task == Task::classification) names.push_back("cac");
  return names;
}

std::optional<double> metric_value(const MetricValues& m, const std::string& name) {
  if (name == "infd") return m.infd;
  if (name == "gi") return m.gi;
  if (name == "ci") return m.ci;
  if (name == "upsilon") return m.upsilon;
  if (name == "upsilon_resampled") return m.upsilon_resampled;
  if (name == "cac") return m.cac;
  return std::nullopt;
}

namespace {

const std::vector<double>* metric_terms(const MetricValues& m, const std::string& name) {
  if (name == "infd") return &m.infd_terms;
  if (name == "gi") return &m.gi_terms;
  if (name == "ci") return &m.ci_terms;
  if (name == "upsilon") return &m.upsilon_terms;
  if (name == "upsilon_resampled") return &m.upsilon_resampled_terms;
  return nullptr;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Benchmark

BenchmarkResult run_benchmark(const Prepared& p, const RunConfig& cfg) {
  BenchmarkResult result;
  for (auto method : cfg.methods)
    for (double tau : cfg.tau_grid) result.runs.push_back(run_method(p, cfg, method, cfg.n, cfg.k, tau));

  const auto names = metric_names(p.test.task, cfg.upsilon_resamples > 0);
  json report;
  report["config"] = cfg.to_json();
  report["test_examples"] = p.test.size();
  if (p.test_accuracy) report["blackbox_test_accuracy"] = *p.test_accuracy;

  std::map<Method, std::vector<const MethodRun*>> by_method;
  for (const auto& r : result.runs) by_method[r.method].push_back(&r);

  json summary = json::object();
  for (auto method : cfg.methods) {
    json ms = json::object();
    std::size_t nonconverged = 0, explanations = 0;
    for (const auto& name : names) {
      std::vector<double> vals;
      for (const auto* r : by_method[method])
        if (auto v = metric_value(r->metrics, name)) vals.push_back(*v);
      if (vals.empty()) continue;
      auto ms_ = mean_sem(vals);
      ms[name] = {{"mean", ms_.mean}, {"sem", ms_.sem}};
    }
    for (const auto* r : by_method[method]) {
      nonconverged += r->metrics.nonconverged;
      explanations += r->explanations.size();
    }
    ms["nonconverged"] = nonconverged;
    ms["explanations"] = explanations;
    summary[to_string(method)] = ms;
  }
  report["summary"] = summary;

  // LINEX against each baseline present
  if (by_method.count(Method::linex)) {
    for (auto baseline : {Method::lime, Method::slime}) {
      if (!by_method.count(baseline)) continue;
      const auto& a_runs = by_method[Method::linex];
      const auto& b_runs = by_method[baseline];
      for (const auto& name : names) {
        Comparison c;
        c.method_a = "linex";
        c.method_b = to_string(baseline);
        c.metric = name;
        std::vector<double> a, b;
        if (name == "cac") {
          c.pairing = "tau";
          for (std::size_t i = 0; i < a_runs.size() && i < b_runs.size(); ++i)
            if (a_runs[i]->metrics.cac && b_runs[i]->metrics.cac) {
              a.push_back(*a_runs[i]->metrics.cac);
              b.push_back(*b_runs[i]->metrics.cac);
            }
        } else {
          c.pairing = "example";
          for (std::size_t i = 0; i < a_runs.size() && i < b_runs.size(); ++i) {
            const auto* ta = metric_terms(a_runs[i]->metrics, name);
            const auto* tb = metric_terms(b_runs[i]->metrics, name);
            a.insert(a.end(), ta->begin(), ta->end());
            b.insert(b.end(), tb->begin(), tb->end());
          }
        }
        c.mean_a = mean_of(a);
        c.mean_b = mean_of(b);
        if (a.size() >= 2 && a.size() == b.size()) {
          try {
            c.p_value = paired_t_test(a, b);
          } catch (const DegenerateVariance&) {
          }
        }
        result.comparisons.push_back(c);
      }
    }
  }
  json tests = json::array();
  for (const auto& c : result.comparisons)
    tests.push_back({{"a", c.method_a}, {"b", c.method_b}, {"metric", c.metric}, {"pairing", c.pairing},
                     {"mean_a", c.mean_a}, {"mean_b", c.mean_b}, {"p_value", nullable(c.p_value)}});
  report["paired_t_tests"] = tests;

  json per_example = json::object();
  for (const auto& r : result.runs) {
    json entry{{"tau", r.tau}, {"ci", r.metrics.ci_terms}, {"upsilon", r.metrics.upsilon_terms}};
    per_example[to_string(r.method)].push_back(entry);
  }
  report["per_example"] = per_example;
  result.report = std::move(report);
  return result;
}

std::string metrics_csv(const BenchmarkResult& r, const RunConfig& cfg) {
  const auto names = metric_names(cfg.task, cfg.upsilon_resamples > 0);
  std::ostringstream out;
  out << "method,neighborhood,n,k,tau";
  for (const auto& name : names) out << ',' << name;
  out << ",nonconverged\n";
  for (const auto& run : r.runs) {
    out << to_string(run.method) << ',' << to_string(cfg.neighborhood) << ',' << run.n << ',' << run.k << ','
        << format_double(run.tau);
    for (const auto& name : names) {
      auto v = metric_value(run.metrics, name);
      out << ',' << (v ? format_double(*v) : "");
    }
    out << ',' << run.metrics.nonconverged << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepRow> run_sweep(const Prepared& p, const RunConfig& cfg) {
  const auto n_grid = cfg.effective_n_grid();
  const auto k_grid = cfg.effective_k_grid();
  const auto names = metric_names(p.test.task, cfg.upsilon_resamples > 0);

  std::vector<double> axis_values;
  if (cfg.axis == "n")
    for (auto v : n_grid) axis_values.push_back(static_cast<double>(v));
  else if (cfg.axis == "k")
    for (auto v : k_grid) axis_values.push_back(static_cast<double>(v));
  else
    axis_values = cfg.tau_grid;

  std::vector<SweepRow> rows;
  for (auto method : cfg.methods) {
    // metric -> axis value -> values over the non-ablated grid
    std::map<std::string, std::map<double, std::vector<double>>> acc;
    for (auto n : n_grid)
      for (auto k : k_grid)
        for (double tau : cfg.tau_grid) {
          auto run = run_method(p, cfg, method, n, k, tau);
          double key = cfg.axis == "n" ? static_cast<double>(n) : cfg.axis == "k" ? static_cast<double>(k) : tau;
          for (const auto& name : names)
            if (auto v = metric_value(run.metrics, name)) acc[name][key].push_back(*v);
        }
    for (const auto& name : names)
      for (double value : axis_values) {
        auto it = acc[name].find(value);
        if (it == acc[name].end()) continue;
        auto ms = mean_sem(it->second);
        rows.push_back({to_string(method), cfg.axis, value, name, ms.mean, ms.sem});
      }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "method,axis,value,metric,mean,sem\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.axis << ',' << format_double(r.value) << ',' << r.metric << ','
        << format_double(r.mean) << ',' << format_double(r.sem) << '\n';
  return out.str();
}

json explanation_record(const Prepared& p, std::size_t index, const Explanation& e) {
  const auto& a = e.attribution;
  json coefs = json::array(), raw = json::array();
  for (Eigen::Index j = 0; j < a.coefficients.size(); ++j) {
    coefs.push_back(a.coefficients[j]);
    raw.push_back(a.coefficients[j] / p.scaler.scale()[j]);
  }
  json rec;
  rec["index"] = index;
  rec["feature_names"] = p.test.feature_names;
  rec["coefficients"] = coefs;
  rec["coefficients_raw_units"] = raw;
  rec["intercept"] = a.intercept;
  rec["support"] = a.support;
  rec["converged"] = e.converged;
  rec["rounds"] = e.rounds;
  rec["gamma"] = e.gamma;
  rec["t"] = e.t;
  rec["blackbox_value"] = p.blackbox_values.at(index);
  rec["query_ledger"] = {{"total_queries", a.query_count}, {"cache_hits", e.cache_hits}};
  if (auto cls = p.per_example.at(index)->class_of_interest()) rec["class_of_interest"] = *cls;
  return rec;
}

}  // namespace linex
