#pragma once

#include <span>
#include <vector>

#include "fedol/matrix.hpp"

namespace fedol {

// Probabilities are clamped to at least this before any log.
inline constexpr double kProbEps = 1e-12;

// A discrete distribution: components in [0,1] summing to 1 within 1e-9.
// Validated on construction.
struct ProbVector {
  std::vector<double> values;

  explicit ProbVector(std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  operator std::span<const double>() const { return values; }
};

// Shift-stabilized softmax (max subtracted before exponentiation).
// Throws NumericError on non-finite input, PreconditionError on empty input.
ProbVector softmax(std::span<const double> logits);

// -sum p ln p with 0 ln 0 := 0. Assumes `p` is a distribution.
double entropy(std::span<const double> p);

// -sum target ln max(pred, eps).
double cross_entropy(std::span<const double> target, std::span<const double> pred);

// sum p ln(p / max(q, eps)) with 0 ln(0/q) := 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Index of the largest component; ties resolve to the smallest index.
std::size_t argmax(std::span<const double> v);

// Applies softmax to every row of a logit matrix in place.
void softmax_rows(Matrix& logits);

}  // namespace fedol
