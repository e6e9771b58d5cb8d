#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "linex/experiment.hpp"

using namespace linex;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(LINEX_CLI) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

std::string config(const std::string& name, json doc) {
  return testutil::write_text(name, doc.dump());
}

json iris_doc() {
  return json{{"dataset", testutil::data_path("iris.csv")},
              {"label_column", "species"},
              {"blackbox", {{"type", "forest"}, {"class_of_interest", 0}}},
              {"methods", {"linex"}},
              {"tau", 0.25},
              {"seed", 1}};
}

}  // namespace

TEST_CASE("explain writes one record per IRIS test example") {
  auto out = testutil::scratch("cli-explain");
  fs::remove_all(out);
  REQUIRE(run("explain --config " + config("explain.json", iris_doc()) + " --out " + out.string()) == 0);
  auto recs = jsonl(out / "explanations.jsonl");
  CHECK(recs.size() == 30);
  for (const auto& r : recs) {
    CHECK(r["support"].size() <= 5);
    CHECK(r["feature_names"].size() == 4);
    CHECK(r.contains("converged"));
    CHECK(r.contains("rounds"));
    CHECK(r.contains("intercept"));
    CHECK(r["query_ledger"]["total_queries"].get<int>() <= 10);
  }

  auto lime = testutil::scratch("cli-explain-lime");
  REQUIRE(run("explain --config " + config("explain.json", iris_doc()) + " --method lime --out " + lime.string()) == 0);
  auto lrecs = jsonl(lime / "explanations.jsonl");
  REQUIRE(lrecs.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i)
    CHECK(recs[i]["query_ledger"]["total_queries"] == lrecs[i]["query_ledger"]["total_queries"]);
}

TEST_CASE("exit codes per error class") {
  auto out = testutil::scratch("cli-errors").string();
  json missing = iris_doc();
  missing["dataset"] = "/no/such/file.csv";
  // the black-box command would leave a marker if it were ever started
  auto marker = testutil::scratch("spawn-marker");
  fs::remove(marker);
  missing["blackbox"] = {{"type", "subprocess"},
                         {"command", {"/bin/sh", "-c", "touch " + marker.string() + "; exec " FAKE_MODEL_SERVER " linear 1,1,1,1 0"}}};
  CHECK(run("explain --config " + config("missing.json", missing) + " --out " + out) == exit_code(ErrorClass::io));
  CHECK_FALSE(fs::exists(marker));

  json unknown = iris_doc();
  unknown["nonsense"] = true;
  CHECK(run("explain --config " + config("unknown.json", unknown) + " --out " + out) == exit_code(ErrorClass::config));
  CHECK(run("explain --config /no/such/config.json") == exit_code(ErrorClass::io));
  CHECK(run("explain --config " + testutil::write_text("broken.json", "{not json") + " --out " + out) ==
        exit_code(ErrorClass::config));
  CHECK(run("explain") == exit_code(ErrorClass::config));

  json proto = iris_doc();
  proto["blackbox"] = {{"type", "subprocess"}, {"command", {FAKE_MODEL_SERVER, "short"}}};
  proto["dataset"] = testutil::write_text("two_features.csv", "a,b,y\n1,2,0\n2,3,1\n3,1,0\n4,4,1\n5,2,0\n6,1,1\n7,3,0\n8,8,1\n9,1,0\n10,2,1\n");
  proto["label_column"] = "y";
  proto["exemplar_k"] = 1;
  CHECK(run("explain --config " + config("proto.json", proto) + " --out " + out) == exit_code(ErrorClass::protocol));

  json dim = proto;
  dim["blackbox"] = {{"type", "subprocess"}, {"command", {FAKE_MODEL_SERVER, "linear", "1,1,1", "0"}}};
  CHECK(run("explain --config " + config("dim.json", dim) + " --out " + out) == exit_code(ErrorClass::protocol));

  json ok = proto;
  ok["blackbox"] = {{"type", "subprocess"}, {"command", {FAKE_MODEL_SERVER, "linear", "1,-1", "0.5"}}};
  CHECK(run("explain --config " + config("ok.json", ok) + " --out " + out) == 0);
}

TEST_CASE("benchmark outputs are byte-identical across runs apart from the header") {
  json doc = iris_doc();
  doc["methods"] = {"linex", "lime"};
  doc["tau_grid"] = {0.25, 0.5};
  auto cfg = config("bench.json", doc);
  auto a = testutil::scratch("cli-bench-a"), b = testutil::scratch("cli-bench-b");
  REQUIRE(run("benchmark --config " + cfg + " --out " + a.string() + " --workers 1") == 0);
  REQUIRE(run("benchmark --config " + cfg + " --out " + b.string() + " --workers 3") == 0);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  auto ra = json::parse(slurp(a / "report.json")), rb = json::parse(slurp(b / "report.json"));
  CHECK(ra["body"] == rb["body"]);
  CHECK(ra["header"].contains("generated_at"));
  CHECK(ra["body"]["paired_t_tests"].size() == 5);
}

TEST_CASE("regression benchmark has no CAC column") {
  std::ostringstream csv;
  csv << "x1,x2,target\n";
  for (int i = 0; i < 40; ++i) csv << i * 0.1 << ',' << (i % 7) * 0.3 << ',' << (i * 0.1) * (i * 0.1) - (i % 7) << '\n';
  json doc{{"dataset", testutil::write_text("reg.csv", csv.str())},
           {"label_column", "target"},
           {"task", "regression"},
           {"blackbox", {{"type", "forest"}, {"trees", 10}}},
           {"methods", {"linex", "lime"}},
           {"tau_grid", {0.5}},
           {"exemplar_k", 2}};
  auto out = testutil::scratch("cli-reg");
  REQUIRE(run("benchmark --config " + config("reg.json", doc) + " --out " + out.string()) == 0);
  auto header = slurp(out / "metrics.csv");
  header = header.substr(0, header.find('\n'));
  CHECK(header == "method,neighborhood,n,k,tau,infd,gi,ci,upsilon,nonconverged");
  auto rep = json::parse(slurp(out / "report.json"));
  CHECK_FALSE(rep["body"]["summary"]["linex"].contains("cac"));
}

TEST_CASE("sweep over k writes long-form rows") {
  json doc = iris_doc();
  doc["methods"] = {"linex", "lime"};
  doc["k_grid"] = {2, 3, 4, 5};
  doc["tau_grid"] = {0.5};
  auto out = testutil::scratch("cli-sweep");
  REQUIRE(run("sweep --config " + config("sweep.json", doc) + " --axis k --out " + out.string()) == 0);
  std::ifstream in(out / "sweep_k.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,axis,value,metric,mean,sem");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 5 * 4);
}

TEST_CASE("oracle-check") {
  CHECK(run("oracle-check --dim 2 --trials 10 --k 2,3") == 0);
  CHECK(run("oracle-check --trials 0") == 0);
  auto out = testutil::scratch("cli-oracle");
  CHECK(run("oracle-check --dim 2 --trials 5 --k 2 --gamma 0.3 --out " + out.string()) == 0);
  auto rep = json::parse(slurp(out / "oracle_report.json"));
  CHECK(rep["body"]["results"][0]["out_of_regime"].get<int>() > 0);
}
