#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedol {

// Mixes a global seed with a stage tag so every pipeline stage gets an
// independent stream. Adding a stage never perturbs the others.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard and all value mappings are implemented here, so sequences are
// identical across compilers and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  // Standard normal, Box-Muller.
  double gaussian();

  // Gamma(alpha, 1) via Marsaglia-Tsang, with the boost trick for alpha < 1.
  double gamma(double alpha);

  // Proportions summing to 1, drawn from Dir(alpha * 1_k).
  std::vector<double> dirichlet(double alpha, std::size_t k);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedol
