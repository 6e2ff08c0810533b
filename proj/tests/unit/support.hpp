#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "hetsr/random.hpp"
#include "hetsr/tensor.hpp"

namespace test {

inline hetsr::Tensor random_tensor(const hetsr::Shape& shape, std::uint64_t seed, double lo = -1.0,
                                   double hi = 1.0, hetsr::DType dtype = hetsr::DType::f64) {
  hetsr::Rng rng(seed);
  return hetsr::Tensor::uniform(shape, lo, hi, rng, dtype);
}

inline double max_abs_diff(const hetsr::Tensor& a, const hetsr::Tensor& b) {
  const auto x = a.to_vector();
  const auto y = b.to_vector();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

// Fresh scratch directory under HETSR_TEST_TMP (or the system temp dir).
inline std::string scratch_dir(const std::string& name) {
  const char* root = std::getenv("HETSR_TEST_TMP");
  const auto base = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path();
  const auto dir = base / ("hetsr_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace test
