#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fedol/client.hpp"
#include "fedol/data.hpp"
#include "fedol/ledger.hpp"
#include "fedol/mlp.hpp"

namespace fedol {

enum class StrategyKind { fedol, local, fedavg, fedprox, feddf, min_entropy };

struct Strategy {
  StrategyKind kind = StrategyKind::fedol;
  std::size_t rounds = 1;  // parameter-averaging strategies only
  double mu = 0.01;        // fedprox proximal coefficient
};

std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view name);

// Does the strategy communicate predictions (true) or model parameters (false)?
bool is_knowledge_strategy(StrategyKind kind);

struct LocalResult {
  std::vector<double> accuracies;
  double mean = 0.0;
  double max = 0.0;
};

// Every client trains alone on its shard; accuracies are measured on the
// shared held-out test set.
LocalResult run_local(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                      const Dataset& test);

// Classic parameter averaging. All specs must share one architecture; each
// round broadcasts the global model, trains locally, then averages weights
// by shard size. Intermediate per-round models are reported via `round_models`
// when non-null.
MlpModel run_fedavg(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                    std::size_t rounds, const TrainConfig& train,
                    MessageLedger* ledger = nullptr,
                    std::vector<MlpModel>* round_models = nullptr);

// FedAvg with each client loss augmented by (mu/2) * ||w - w_global||^2.
MlpModel run_fedprox(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                     std::size_t rounds, double mu, const TrainConfig& train,
                     MessageLedger* ledger = nullptr,
                     std::vector<MlpModel>* round_models = nullptr);

// Ensemble distillation against the uniform mean of client predictions.
MlpModel run_feddf(const std::vector<PredictionUpload>& uploads, const Matrix& public_features,
                   const std::vector<std::size_t>& server_arch, const TrainConfig& train);

// Hard labels from the single lowest-entropy client prediction per sample
// (ties to the smallest client index), then plain supervised training.
MlpModel run_min_entropy(const std::vector<PredictionUpload>& uploads,
                         const Matrix& public_features,
                         const std::vector<std::size_t>& server_arch, const TrainConfig& train);

// The per-sample teacher labels MinE trains on; exposed for tests.
std::vector<std::size_t> min_entropy_labels(const std::vector<PredictionUpload>& uploads);

// Shard-size weighted mean of identically shaped models.
MlpModel average_models(const std::vector<MlpModel>& models, const std::vector<double>& weights);

}  // namespace fedol
