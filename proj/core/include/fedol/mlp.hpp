#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedol/matrix.hpp"

namespace fedol {

enum class Activation { relu, tanh };

// Dense feed-forward classifier. layer_sizes = {input dim, hidden..., classes}.
// weights[l] has shape layer_sizes[l+1] x layer_sizes[l]; the final layer is
// linear, softmax is applied by the caller.
struct MlpModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;

  bool operator==(const MlpModel& other) const = default;
};

// Glorot-uniform weights, zero biases, seeded.
MlpModel init_mlp(std::vector<std::size_t> layer_sizes, Activation activation,
                  std::uint64_t seed);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

Gradients zero_gradients(const MlpModel& model);

// Logits for a batch (rows = samples). Throws ShapeError on dim mismatch.
Matrix forward(const MlpModel& model, const Matrix& batch);

// Forward pass keeping post-activation values of every hidden layer, for backprop.
struct ForwardTrace {
  std::vector<Matrix> hidden;  // one entry per hidden layer
  Matrix logits;
};
ForwardTrace forward_trace(const MlpModel& model, const Matrix& batch);

// Backpropagates an output-space gradient dL/dlogits to all parameters.
Gradients backward(const MlpModel& model, const Matrix& batch, const ForwardTrace& trace,
                   const Matrix& dlogits);

void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
};

// Additional loss term evaluated once per mini-batch; adds its parameter-space
// gradient into `grads` and returns its loss value. Used for proximal penalties.
using PenaltyFn = std::function<double(const MlpModel&, Gradients&)>;

// Mini-batch SGD on mean cross-entropy of softmax(forward(x)) against one-hot
// labels, plus the optional penalty. Shuffling derives only from cfg.seed.
MlpModel train_supervised(MlpModel model, const Matrix& features, const Matrix& labels,
                          const TrainConfig& cfg, const PenaltyFn& penalty = nullptr);

// Fraction of rows whose logit argmax equals the label index.
double accuracy(const MlpModel& model, const Matrix& features,
                const std::vector<std::size_t>& labels);

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx);

}  // namespace fedol
