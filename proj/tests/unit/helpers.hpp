#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "petsr/volume.hpp"

namespace petsr::testing {

inline std::filesystem::path tmp_dir(const std::string& sub) {
  const std::filesystem::path p = std::filesystem::path(PETSR_TEST_TMP) / sub;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline ImageGrid random_grid(Dims d, Vec3 v, std::uint64_t seed, double lo = 0.0,
                             double hi = 1.0, Modality m = Modality::GENERIC) {
  ImageGrid g(d, v, m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& x : g.data) x = u(rng);
  return g;
}

inline double max_abs_diff(const ImageGrid& a, const ImageGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace petsr::testing
