#ifndef MIXSEL_TEST_HELPERS_HPP
#define MIXSEL_TEST_HELPERS_HPP

#include <random>
#include <string>

#include "csv.hpp"
#include "mixsel/estimation.hpp"

namespace mixsel::test {

inline std::string data_path(const std::string& name) {
  return std::string(MIXSEL_TEST_DATA) + "/" + name;
}

inline Dataset fixture(const std::string& name) { return load_csv(data_path(name)); }

// Balanced one-way gaussian design: `levels` groups of size `per_level`, one
// covariate, response y = 2 + 0.5 x + b_g + eps with sd(b) = group_sd.
inline Dataset simulate_grouped(std::uint64_t seed, int levels, int per_level, double group_sd,
                                double resid_sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  int n = levels * per_level;
  Eigen::VectorXd y(n), x(n);
  std::vector<std::string> g;
  int i = 0;
  for (int l = 0; l < levels; ++l) {
    double b = group_sd * nd(rng);
    for (int r = 0; r < per_level; ++r, ++i) {
      x[i] = nd(rng);
      y[i] = 2.0 + 0.5 * x[i] + b + resid_sd * nd(rng);
      g.push_back("g" + std::to_string(l));
    }
  }
  return make_dataset({{"y", y}, {"x", x}}, {{"g", g}});
}

}  // namespace mixsel::test

#endif
