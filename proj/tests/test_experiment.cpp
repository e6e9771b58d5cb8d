#include <doctest.h>

#include "helpers.hpp"
#include "linex/experiment.hpp"

using namespace linex;

namespace {

json iris_doc() {
  return json{{"dataset", testutil::data_path("iris.csv")},
              {"label_column", "species"},
              {"blackbox", {{"type", "forest"}, {"trees", 20}, {"class_of_interest", 0}}},
              {"methods", {"linex", "lime"}},
              {"tau_grid", {0.25, 0.75}},
              {"seed", 3}};
}

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = RunConfig::from_json(iris_doc());
  CHECK(cfg.methods.size() == 2);
  CHECK(cfg.blackbox.trees == 20);
  CHECK(*cfg.blackbox.class_of_interest == 0);
  CHECK(cfg.n == 10);
  CHECK(cfg.tau_grid.size() == 2);
  auto back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("config rejections") {
  auto bad = [](auto mutate) {
    json doc = iris_doc();
    mutate(doc);
    return doc;
  };
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["colour"] = 1; })), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["blackbox"]["depth"] = 1; })), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["n"] = "ten"; })), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["schema_version"] = 2; })), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["methods"] = {"shap"}; })), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(bad([](json& d) { d["neighborhood"] = "vae"; })), ConfigError);
  auto invalid = [&](auto mutate) { return RunConfig::from_json(bad(mutate)).validate(); };
  CHECK_THROWS_AS(invalid([](json& d) { d["k"] = 1; }), ConfigError);
  CHECK_THROWS_AS(invalid([](json& d) { d["tau_grid"] = json::array(); }), ConfigError);
  CHECK_THROWS_AS(invalid([](json& d) { d["test_fraction"] = 1.0; }), ConfigError);
  CHECK_THROWS_AS(invalid([](json& d) { d["axis"] = "gamma"; }), ConfigError);
  CHECK_THROWS_AS(invalid([](json& d) { d["blackbox"] = {{"type", "svm"}}; }), ConfigError);
  CHECK_THROWS_AS(invalid([](json& d) { d["blackbox"] = {{"type", "subprocess"}}; }), ConfigError);
}

TEST_CASE("prepare splits 120/30 and trains an accurate forest") {
  auto cfg = RunConfig::from_json(iris_doc());
  auto p = prepare(cfg);
  CHECK(p.train.size() == 120);
  CHECK(p.test.size() == 30);
  CHECK(*p.test_accuracy >= 0.85);
  CHECK(p.per_example.size() == 30);
  CHECK(p.neighbors.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(*p.per_example[i]->class_of_interest() == 0);
}

TEST_CASE("unset class of interest explains each example's predicted class") {
  json doc = iris_doc();
  doc["blackbox"].erase("class_of_interest");
  auto p = prepare(RunConfig::from_json(doc));
  for (std::size_t i = 0; i < p.test.size(); ++i)
    CHECK(*p.per_example[i]->class_of_interest() == p.forest->predict_class(p.test_raw.examples[i].features));
}

TEST_CASE("missing dataset fails before a black-box exists") {
  json doc = iris_doc();
  doc["dataset"] = "/no/such/iris.csv";
  CHECK_THROWS_AS(prepare(RunConfig::from_json(doc)), IoError);
}

TEST_CASE("benchmark report structure") {
  auto cfg = RunConfig::from_json(iris_doc());
  auto p = prepare(cfg);
  auto r = run_benchmark(p, cfg);
  CHECK(r.runs.size() == 4);
  CHECK(r.comparisons.size() == metric_names(Task::classification, false).size());
  CHECK(r.report["per_example"]["linex"].size() == 2);
  CHECK(r.report["per_example"]["linex"][0]["ci"].size() == 30);
  CHECK(r.report["summary"]["lime"].contains("cac"));
  auto csv = metrics_csv(r, cfg);
  CHECK(csv.rfind("method,neighborhood,n,k,tau,infd,gi,ci,upsilon,cac,nonconverged\n", 0) == 0);

  cfg.methods = {Method::lime};
  auto single = run_benchmark(p, cfg);
  CHECK(single.comparisons.empty());
  CHECK(single.report["paired_t_tests"].empty());
}

TEST_CASE("sweep reduces to the benchmark on a one-point grid") {
  auto cfg = RunConfig::from_json(iris_doc());
  cfg.tau_grid = {0.5};
  cfg.methods = {Method::linex};
  auto p = prepare(cfg);
  auto bench = run_benchmark(p, cfg);
  auto rows = run_sweep(p, cfg);
  CHECK(rows.size() == 5);
  for (const auto& row : rows) {
    CHECK(row.sem == 0.0);
    CHECK(row.mean == *metric_value(bench.runs[0].metrics, row.metric));
  }
}

TEST_CASE("sweep over k emits one row per k per metric") {
  auto cfg = RunConfig::from_json(iris_doc());
  cfg.k_grid = {2, 3, 4, 5};
  cfg.tau_grid = {0.5, 0.75};
  cfg.axis = "k";
  auto p = prepare(cfg);
  auto rows = run_sweep(p, cfg);
  CHECK(rows.size() == 2 * 5 * 4);
  for (const auto& row : rows) CHECK(row.axis == "k");
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 12345.678})
    CHECK(std::stod(format_double(v)) == v);
}
