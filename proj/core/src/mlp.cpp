#include "fedol/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "fedol/errors.hpp"
#include "fedol/prob.hpp"
#include "fedol/rng.hpp"

namespace fedol {

namespace {

void apply_activation(Matrix& m, Activation act) {
  if (act == Activation::relu) {
    for (double& v : m.data()) v = std::max(v, 0.0);
  } else {
    for (double& v : m.data()) v = std::tanh(v);
  }
}

// z = a * W^T + b, with W shaped (out x in).
Matrix linear(const Matrix& a, const Matrix& w, const std::vector<double>& b) {
  Matrix z(a.rows(), w.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    auto zi = z.row(i);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      auto wo = w.row(o);
      double acc = b[o];
      for (std::size_t j = 0; j < wo.size(); ++j) acc += ai[j] * wo[j];
      zi[o] = acc;
    }
  }
  return z;
}

void check_input(const MlpModel& model, const Matrix& batch) {
  if (batch.cols() != model.input_dim()) {
    throw ShapeError("forward: batch cols != model input dim");
  }
}

}  // namespace

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].rows() * weights[l].cols() + biases[l].size();
  }
  return n;
}

MlpModel init_mlp(std::vector<std::size_t> layer_sizes, Activation activation,
                  std::uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw PreconditionError("init_mlp: need at least input and output layers");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw PreconditionError("init_mlp: zero-width layer");
  }
  MlpModel model;
  model.layer_sizes = std::move(layer_sizes);
  model.activation = activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
    const std::size_t fan_in = model.layer_sizes[l];
    const std::size_t fan_out = model.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(fan_out, 0.0);
  }
  return model;
}

Gradients zero_gradients(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    g.weights.emplace_back(model.weights[l].rows(), model.weights[l].cols());
    g.biases.emplace_back(model.biases[l].size(), 0.0);
  }
  return g;
}

Matrix forward(const MlpModel& model, const Matrix& batch) {
  check_input(model, batch);
  Matrix a = batch;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    a = linear(a, model.weights[l], model.biases[l]);
    if (l + 1 < model.num_layers()) apply_activation(a, model.activation);
  }
  return a;
}

ForwardTrace forward_trace(const MlpModel& model, const Matrix& batch) {
  check_input(model, batch);
  ForwardTrace trace;
  const Matrix* a = &batch;
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    Matrix h = linear(*a, model.weights[l], model.biases[l]);
    apply_activation(h, model.activation);
    trace.hidden.push_back(std::move(h));
    a = &trace.hidden.back();
  }
  trace.logits = linear(*a, model.weights.back(), model.biases.back());
  return trace;
}

Gradients backward(const MlpModel& model, const Matrix& batch, const ForwardTrace& trace,
                   const Matrix& dlogits) {
  Gradients grads = zero_gradients(model);
  const std::size_t layers = model.num_layers();
  Matrix dz = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& a = (l == 0) ? batch : trace.hidden[l - 1];
    Matrix& dw = grads.weights[l];
    std::vector<double>& db = grads.biases[l];
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      auto dzi = dz.row(i);
      auto ai = a.row(i);
      for (std::size_t o = 0; o < dzi.size(); ++o) {
        const double g = dzi[o];
        db[o] += g;
        auto dwo = dw.row(o);
        for (std::size_t j = 0; j < ai.size(); ++j) dwo[j] += g * ai[j];
      }
    }
    if (l == 0) break;
    // da = dz * W, then through the activation derivative.
    const Matrix& w = model.weights[l];
    Matrix da(dz.rows(), w.cols());
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      auto dzi = dz.row(i);
      auto dai = da.row(i);
      for (std::size_t o = 0; o < dzi.size(); ++o) {
        const double g = dzi[o];
        auto wo = w.row(o);
        for (std::size_t j = 0; j < wo.size(); ++j) dai[j] += g * wo[j];
      }
    }
    const Matrix& act = trace.hidden[l - 1];
    if (model.activation == Activation::relu) {
      for (std::size_t i = 0; i < da.data().size(); ++i) {
        if (act.data()[i] <= 0.0) da.data()[i] = 0.0;
      }
    } else {
      for (std::size_t i = 0; i < da.data().size(); ++i) {
        const double t = act.data()[i];
        da.data()[i] *= 1.0 - t * t;
      }
    }
    dz = std::move(da);
  }
  return grads;
}

void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate) {
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& w = model.weights[l].data();
    const auto& gw = grads.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * gw[i];
    auto& b = model.biases[l];
    const auto& gb = grads.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * gb[i];
  }
}

MlpModel train_supervised(MlpModel model, const Matrix& features, const Matrix& labels,
                          const TrainConfig& cfg, const PenaltyFn& penalty) {
  if (features.rows() == 0) throw PreconditionError("train_supervised: empty dataset");
  if (features.rows() != labels.rows()) {
    throw ShapeError("train_supervised: features rows != labels rows");
  }
  if (labels.cols() != model.num_classes()) {
    throw ShapeError("train_supervised: labels cols != model classes");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
    throw PreconditionError("train_supervised: invalid TrainConfig");
  }
  check_input(model, features);

  const std::size_t n = features.rows();
  Rng rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = gather_rows(features, idx);
      const Matrix yb = gather_rows(labels, idx);

      ForwardTrace trace = forward_trace(model, xb);
      Matrix probs = trace.logits;
      softmax_rows(probs);

      double loss = 0.0;
      Matrix dlogits(len, model.num_classes());
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) {
        loss += cross_entropy(yb.row(i), probs.row(i)) * inv;
        auto d = dlogits.row(i);
        auto p = probs.row(i);
        auto y = yb.row(i);
        for (std::size_t c = 0; c < d.size(); ++c) d[c] = (p[c] - y[c]) * inv;
      }

      Gradients grads = backward(model, xb, trace, dlogits);
      if (penalty) loss += penalty(model, grads);
      if (!std::isfinite(loss)) {
        throw TrainingDivergedError("train_supervised: loss became non-finite");
      }
      sgd_step(model, grads, cfg.learning_rate);
    }
  }
  return model;
}

double accuracy(const MlpModel& model, const Matrix& features,
                const std::vector<std::size_t>& labels) {
  if (features.rows() != labels.size()) {
    throw ShapeError("accuracy: features rows != labels size");
  }
  if (features.rows() == 0) return 0.0;
  const Matrix logits = forward(model, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (argmax(logits.row(i)) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Matrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw PreconditionError("one_hot: label out of range");
    m(i, labels[i]) = 1.0;
  }
  return m;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto dst = out.row(i);
    auto s = src.row(idx[i]);
    std::copy(s.begin(), s.end(), dst.begin());
  }
  return out;
}

}  // namespace fedol
