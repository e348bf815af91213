#include "fedol/prob.hpp"

#include <algorithm>
#include <cmath>

#include "fedol/errors.hpp"

namespace fedol {

ProbVector::ProbVector(std::vector<double> v) : values(std::move(v)) {
  if (values.empty()) throw PreconditionError("ProbVector: empty");
  double sum = 0.0;
  for (double p : values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw NumericError("ProbVector: component outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw NumericError("ProbVector: components do not sum to 1");
  }
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw PreconditionError("softmax: empty input");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbVector(std::move(out));
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw ShapeError("cross_entropy: dimension mismatch");
  }
  double ce = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    ce -= target[i] * std::log(std::max(pred[i], kProbEps));
  }
  return ce;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_divergence: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      kl += p[i] * std::log(p[i] / std::max(q[i], kProbEps));
    }
  }
  return kl;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void softmax_rows(Matrix& logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double shift = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - shift);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

}  // namespace fedol
