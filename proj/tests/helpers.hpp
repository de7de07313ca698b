#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dydec/types.hpp"

namespace testutil {

inline dydec::Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  dydec::Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dydec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Direct O(N L) evaluation of the centred zero-padded correlation.
inline dydec::Vector naive_conv_same(const dydec::Vector& x, const dydec::Vector& k) {
  const Eigen::Index n = x.size(), c = (k.size() - 1) / 2;
  dydec::Vector out = dydec::Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k.size(); ++j) {
      const Eigen::Index src = i + j - c;
      if (src >= 0 && src < n) out[i] += k[j] * x[src];
    }
  return out;
}

}  // namespace testutil
