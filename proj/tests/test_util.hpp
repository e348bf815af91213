#pragma once

// Shared generators and numeric helpers for the test suites.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fedol/matrix.hpp"

namespace testutil {

// Independent of fedol::Rng on purpose; test inputs should not depend on the
// library's own sampling code.
class TestRand {
 public:
  explicit TestRand(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

 private:
  std::mt19937_64 engine_;
};

// A random distribution row; sometimes sharpened so entropies spread out.
inline std::vector<double> random_distribution(TestRand& rng, std::size_t classes) {
  std::vector<double> p(classes);
  double sum = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform01());
    sum += v;
  }
  for (double& v : p) v /= sum;
  if (rng.uniform01() < 0.5) {
    sum = 0.0;
    for (double& v : p) {
      v = v * v * v;
      sum += v;
    }
    for (double& v : p) v /= sum;
  }
  return p;
}

inline fedol::Matrix random_prob_matrix(TestRand& rng, std::size_t rows, std::size_t cols) {
  fedol::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::vector<double> p = random_distribution(rng, cols);
    auto row = m.row(i);
    std::copy(p.begin(), p.end(), row.begin());
  }
  return m;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x,
                                 double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testutil
