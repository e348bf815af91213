#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedol/client.hpp"
#include "fedol/data.hpp"
#include "fedol/matrix.hpp"
#include "fedol/mlp.hpp"

namespace fedol {

// Per-model mean predicted probability for each class over the public pool.
// Used as the class-specific voting weight.
struct ClassConfidence {
  std::vector<double> scores;
};

// One entry per public sample: a class index, or abstention when no source
// model was confident enough to vote.
struct PseudoLabelSet {
  std::vector<std::optional<std::size_t>> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t abstain_count() const;
  double abstain_fraction() const;
};

// Participation ratio schedule: rho(t) = min(1, rho_start + t * rho_step),
// with t counting iterations from zero. Easy-to-hard annealing: higher rho
// admits more pseudo-labels.
struct RhoSchedule {
  double rho_start = 0.1;
  double rho_step = 0.05;

  double at(std::size_t t) const;
};

// Column mean of a prediction matrix.
ClassConfidence class_confidence(const Matrix& probs);

// The ceil(rho * N)-th smallest prediction entropy over the pool. Predictions
// with entropy above it are deemed unreliable for voting.
double entropy_baseline(const Matrix& probs, double rho);

// Indices of models whose entropy on this sample is <= their baseline.
std::vector<std::size_t> reliable_set(const std::vector<std::vector<double>>& sample_probs,
                                      const std::vector<double>& baselines);

// +1 on the argmax class, -1 everywhere else (ties break to the smallest index).
std::vector<int> vote_vector(std::span<const double> probs);

// Componentwise confidence-weighted vote: G_c = sum_m conf_mc * vote_mc /
// sum_m conf_mc, in [-1, 1]. A class no model has mass on gets -1.
std::vector<double> aggregate_vote(const std::vector<std::vector<int>>& votes,
                                   const std::vector<ClassConfidence>& confidences);

// The full voting pipeline over every public sample. `sources` holds the
// client prediction matrices, plus the server's appended once it joins;
// `confidences` is aligned with it.
PseudoLabelSet generate_pseudo_labels(const std::vector<Matrix>& sources,
                                      const std::vector<ClassConfidence>& confidences,
                                      double rho);

// Softmax of negative prediction entropies across clients: confident clients
// get more weight when distilling sample x.
std::vector<double> distill_weights(const std::vector<PredictionUpload>& uploads,
                                    std::size_t sample_index);

// All sample weights at once, N_u x K.
Matrix distill_weight_matrix(const std::vector<PredictionUpload>& uploads);

struct ServerLoss {
  double total = 0.0;
  double distill = 0.0;  // weighted KL from client predictions
  double pseudo = 0.0;   // CE against non-abstained pseudo-labels
  Gradients grad;
};

// total = distill + tau * pseudo, with the exact full-pool analytic gradient.
// Abstained samples contribute nothing to the pseudo term, numerator or
// denominator.
ServerLoss server_loss(const MlpModel& server, const Matrix& public_features,
                       const std::vector<PredictionUpload>& uploads,
                       const PseudoLabelSet& pseudo, double tau);

struct FedolOptions {
  std::vector<std::size_t> server_arch;
  RhoSchedule schedule;
  double tau = 0.2;
  std::size_t iterations = 10;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct FedolIterationStats {
  std::size_t iteration = 0;  // 1-based
  double rho = 0.0;
  double abstain_fraction = 0.0;
  double pseudo_label_accuracy = 0.0;  // NaN without ground truth
  double distill_loss = 0.0;
  double pseudo_loss = 0.0;
  double test_accuracy = 0.0;  // NaN without a test set
};

// Optional instrumentation; never feeds back into training.
struct FedolEval {
  const std::vector<std::size_t>* public_labels = nullptr;
  const Dataset* test_set = nullptr;
};

struct FedolResult {
  MlpModel server;
  std::vector<FedolIterationStats> history;
};

// Alternates pseudo-label generation and server training for `iterations`
// rounds. The server joins the voting source set from the second round on;
// its training warm-starts from the previous round's model.
FedolResult run_fedol(const std::vector<PredictionUpload>& uploads,
                      const Matrix& public_features, const FedolOptions& opt,
                      const FedolEval* eval = nullptr);

}  // namespace fedol
