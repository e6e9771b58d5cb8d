// Serial vs OpenMP explanation throughput on IRIS.
//
//   bench_explain [repeats] [method]

#include <chrono>
#include <fstream>
#include <iostream>
#include <omp.h>

#include "linex/experiment.hpp"

using namespace linex;

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  const Method method = argc > 2 ? parse_method(argv[2]) : Method::linex;

  std::ifstream in(std::string(LINEX_SOURCE_DIR) + "/configs/iris_benchmark.json");
  RunConfig cfg = RunConfig::from_json(json::parse(in));
  cfg.dataset = std::string(LINEX_SOURCE_DIR) + "/" + cfg.dataset;
  Prepared p = prepare(cfg);
  ExplainSettings s = cfg.settings(method, cfg.n, cfg.k, 0.5);
  auto selector = p.selector();

  auto time = [&](auto&& fn) {
    double best = 1e300;
    std::vector<Explanation> out;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      out = fn();
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return std::make_pair(best, out);
  };

  auto [serial_s, serial] = time([&] { return explain_all_serial(p.test.examples, selector, p.train, s); });
  auto [par_s, par] = time([&] { return explain_all_parallel(p.test.examples, selector, p.train, s); });

  bool identical = serial.size() == par.size();
  for (std::size_t i = 0; identical && i < serial.size(); ++i)
    identical = serial[i].attribution.coefficients == par[i].attribution.coefficients;

  std::cout << "method=" << to_string(method) << " examples=" << p.test.size() << " threads=" << omp_get_max_threads()
            << '\n'
            << "serial   " << serial_s * 1e3 << " ms\n"
            << "parallel " << par_s * 1e3 << " ms\n"
            << "speedup  " << serial_s / par_s << "x\n"
            << "identical " << (identical ? "yes" : "no") << '\n';
  return identical ? 0 : 1;
}
