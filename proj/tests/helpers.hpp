#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "linex/core.hpp"
#include "oracles.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) { return std::string(LINEX_DATA_DIR) + "/" + name; }

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "linex-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline std::string write_text(const std::string& name, const std::string& text) {
  auto p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

inline linex::Vector vec(std::initializer_list<double> v) {
  linex::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline std::vector<double> stdvec(const linex::Vector& v) { return {v.data(), v.data() + v.size()}; }

template <typename Samples>
std::vector<oracle::Point> to_points(const Samples& s) {
  std::vector<oracle::Point> out;
  for (const auto& p : s) out.push_back({stdvec(p.features), p.target, p.weight});
  return out;
}

}  // namespace testutil
