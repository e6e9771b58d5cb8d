// Scripted NDJSON model server for subprocess tests.
//
//   fake_model_server linear <w1,w2,...> <b>   well-behaved linear model
//   fake_model_server short                     replies with one value too few
//   fake_model_server wrong_id                  echoes id + 1
//   fake_model_server garbage                   prints a non-JSON line
//   fake_model_server hang                      never answers predict
//   fake_model_server bad_meta                  handshake without "d"
//   fake_model_server die                       exits after the handshake
//   fake_model_server nan                       replies with a NaN literal

#include <chrono>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using nlohmann::json;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: fake_model_server MODE [args]\n";
    return 2;
  }
  const std::string mode = argv[1];
  std::vector<double> w;
  double b = 0.0;
  if (mode == "linear") {
    if (argc < 4) {
      std::cerr << "linear needs weights and intercept\n";
      return 2;
    }
    std::stringstream ss(argv[2]);
    std::string tok;
    while (std::getline(ss, tok, ',')) w.push_back(std::stod(tok));
    b = std::stod(argv[3]);
  } else {
    w = {1.0, 1.0};
  }

  std::string line;
  while (std::getline(std::cin, line)) {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception& e) {
      std::cerr << "malformed request: " << e.what() << '\n';
      return 3;
    }
    const std::string op = req.value("op", "");
    if (op == "meta") {
      if (mode == "bad_meta")
        std::cout << json{{"task", "regression"}}.dump() << std::endl;
      else
        std::cout << json{{"d", w.size()}, {"task", "regression"}}.dump() << std::endl;
      if (mode == "die") return 0;
      continue;
    }
    if (op != "predict") {
      std::cerr << "unknown op\n";
      return 3;
    }
    if (mode == "hang") {
      std::this_thread::sleep_for(std::chrono::seconds(30));
      return 0;
    }
    if (mode == "garbage") {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    if (mode == "nan") {
      std::cout << "{\"id\":" << req["id"].get<long long>() << ",\"y\":[NaN]}" << std::endl;
      continue;
    }
    json y = json::array();
    for (const auto& row : req["x"]) {
      double v = b;
      for (std::size_t j = 0; j < w.size(); ++j) v += w[j] * row[j].get<double>();
      y.push_back(v);
    }
    if (mode == "short" && !y.empty()) y.erase(y.size() - 1);
    long long id = req["id"].get<long long>();
    if (mode == "wrong_id") ++id;
    std::cout << json{{"id", id}, {"y", y}}.dump() << std::endl;
  }
  return 0;
}
