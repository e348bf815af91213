#include "fedol/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "fedol/errors.hpp"
#include "fedol/prob.hpp"
#include "fedol/rng.hpp"

namespace fedol {

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::fedol: return "fedol";
    case StrategyKind::local: return "local";
    case StrategyKind::fedavg: return "fedavg";
    case StrategyKind::fedprox: return "fedprox";
    case StrategyKind::feddf: return "feddf";
    case StrategyKind::min_entropy: return "min_entropy";
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  if (name == "fedol") return StrategyKind::fedol;
  if (name == "local") return StrategyKind::local;
  if (name == "fedavg") return StrategyKind::fedavg;
  if (name == "fedprox") return StrategyKind::fedprox;
  if (name == "feddf") return StrategyKind::feddf;
  if (name == "min_entropy") return StrategyKind::min_entropy;
  throw ConfigError("unknown strategy: '" + std::string(name) + "'");
}

bool is_knowledge_strategy(StrategyKind kind) {
  return kind == StrategyKind::fedol || kind == StrategyKind::feddf ||
         kind == StrategyKind::min_entropy;
}

LocalResult run_local(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                      const Dataset& test) {
  if (shards.empty() || shards.size() != specs.size()) {
    throw PreconditionError("run_local: shards/specs misaligned");
  }
  LocalResult result;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const MlpModel model = local_train(specs[k], shards[k]);
    result.accuracies.push_back(accuracy(model, test.features, test.labels));
  }
  result.mean = 0.0;
  for (double a : result.accuracies) result.mean += a;
  result.mean /= static_cast<double>(result.accuracies.size());
  result.max = *std::max_element(result.accuracies.begin(), result.accuracies.end());
  return result;
}

MlpModel average_models(const std::vector<MlpModel>& models, const std::vector<double>& weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw PreconditionError("average_models: models/weights misaligned");
  }
  for (const MlpModel& m : models) {
    if (m.layer_sizes != models.front().layer_sizes) {
      throw IncompatibleArchitectureError("average_models: layer sizes differ");
    }
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw PreconditionError("average_models: nonpositive total weight");

  MlpModel avg = models.front();
  for (std::size_t l = 0; l < avg.num_layers(); ++l) {
    std::fill(avg.weights[l].data().begin(), avg.weights[l].data().end(), 0.0);
    std::fill(avg.biases[l].begin(), avg.biases[l].end(), 0.0);
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double w = weights[k] / total;
    for (std::size_t l = 0; l < avg.num_layers(); ++l) {
      const auto& src = models[k].weights[l].data();
      auto& dst = avg.weights[l].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
      for (std::size_t i = 0; i < avg.biases[l].size(); ++i) {
        avg.biases[l][i] += w * models[k].biases[l][i];
      }
    }
  }
  return avg;
}

namespace {

MlpModel run_parameter_averaging(const std::vector<Dataset>& shards,
                                 const std::vector<ClientSpec>& specs, std::size_t rounds,
                                 double mu, const TrainConfig& train, MessageLedger* ledger,
                                 std::vector<MlpModel>* round_models, std::string_view phase) {
  if (shards.empty() || shards.size() != specs.size()) {
    throw PreconditionError("parameter averaging: shards/specs misaligned");
  }
  if (rounds < 1) throw PreconditionError("parameter averaging: rounds must be >= 1");
  for (const ClientSpec& s : specs) {
    if (s.arch != specs.front().arch) {
      throw IncompatibleArchitectureError(
          "parameter averaging requires a uniform model architecture across clients");
    }
  }

  MlpModel global =
      init_mlp(specs.front().arch, Activation::relu, mix_seed(train.seed, "global-init"));
  const std::uint64_t param_bytes =
      static_cast<std::uint64_t>(global.parameter_count()) * sizeof(double);

  std::vector<Matrix> labels;
  std::vector<double> sizes;
  for (const Dataset& shard : shards) {
    if (shard.size() == 0) throw PreconditionError("parameter averaging: empty shard");
    labels.push_back(one_hot(shard.labels, global.num_classes()));
    sizes.push_back(static_cast<double>(shard.size()));
  }

  for (std::size_t r = 0; r < rounds; ++r) {
    TrainConfig round_cfg = train;
    // Equal seeds across clients: identical shards must yield identical weights.
    round_cfg.seed = mix_seed(train.seed, "round", r);

    std::vector<MlpModel> locals;
    for (std::size_t k = 0; k < shards.size(); ++k) {
      if (ledger != nullptr) ledger->record_download(phase, k, param_bytes);
      PenaltyFn penalty;
      if (mu > 0.0) {
        const MlpModel& anchor = global;
        penalty = [mu, &anchor](const MlpModel& m, Gradients& g) {
          double loss = 0.0;
          for (std::size_t l = 0; l < m.num_layers(); ++l) {
            const auto& w = m.weights[l].data();
            const auto& w0 = anchor.weights[l].data();
            auto& gw = g.weights[l].data();
            for (std::size_t i = 0; i < w.size(); ++i) {
              const double d = w[i] - w0[i];
              loss += 0.5 * mu * d * d;
              gw[i] += mu * d;
            }
            for (std::size_t i = 0; i < m.biases[l].size(); ++i) {
              const double d = m.biases[l][i] - anchor.biases[l][i];
              loss += 0.5 * mu * d * d;
              g.biases[l][i] += mu * d;
            }
          }
          return loss;
        };
      }
      locals.push_back(
          train_supervised(global, shards[k].features, labels[k], round_cfg, penalty));
      if (ledger != nullptr) ledger->record_upload(phase, k, param_bytes);
    }
    global = average_models(locals, sizes);
    if (round_models != nullptr) round_models->push_back(global);
  }
  return global;
}

// Distills the server against fixed per-sample target distributions with
// mini-batch SGD on KL(target || softmax(logits)).
MlpModel distill_to_targets(const Matrix& public_features, const Matrix& targets,
                            const std::vector<std::size_t>& server_arch,
                            const TrainConfig& train, std::string_view tag) {
  MlpModel server = init_mlp(server_arch, Activation::relu, mix_seed(train.seed, tag));
  const std::size_t n = public_features.rows();
  const std::size_t classes = targets.cols();

  // Per-sample constant so the running loss is a true KL, not just cross-entropy.
  std::vector<double> neg_target_entropy(n);
  for (std::size_t i = 0; i < n; ++i) neg_target_entropy[i] = -entropy(targets.row(i));

  Rng rng(mix_seed(train.seed, tag, 1));
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += train.batch_size) {
      const std::size_t len = std::min(train.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = gather_rows(public_features, idx);

      ForwardTrace trace = forward_trace(server, xb);
      Matrix probs = trace.logits;
      softmax_rows(probs);

      double loss = 0.0;
      Matrix dlogits(len, classes);
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t b = 0; b < len; ++b) {
        auto target = targets.row(idx[b]);
        auto p = probs.row(b);
        auto d = dlogits.row(b);
        double ce = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          ce -= target[c] * std::log(std::max(p[c], kProbEps));
          d[c] = (p[c] - target[c]) * inv;
        }
        loss += (neg_target_entropy[idx[b]] + ce) * inv;
      }
      if (!std::isfinite(loss)) {
        throw TrainingDivergedError("distillation loss became non-finite");
      }
      Gradients grads = backward(server, xb, trace, dlogits);
      sgd_step(server, grads, train.learning_rate);
    }
  }
  return server;
}

}  // namespace

MlpModel run_fedavg(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                    std::size_t rounds, const TrainConfig& train, MessageLedger* ledger,
                    std::vector<MlpModel>* round_models) {
  return run_parameter_averaging(shards, specs, rounds, 0.0, train, ledger, round_models,
                                 "fedavg");
}

MlpModel run_fedprox(const std::vector<Dataset>& shards, const std::vector<ClientSpec>& specs,
                     std::size_t rounds, double mu, const TrainConfig& train,
                     MessageLedger* ledger, std::vector<MlpModel>* round_models) {
  if (mu < 0.0) throw PreconditionError("run_fedprox: mu must be >= 0");
  return run_parameter_averaging(shards, specs, rounds, mu, train, ledger, round_models,
                                 "fedprox");
}

MlpModel run_feddf(const std::vector<PredictionUpload>& uploads, const Matrix& public_features,
                   const std::vector<std::size_t>& server_arch, const TrainConfig& train) {
  if (uploads.empty()) throw PreconditionError("run_feddf: no uploads");
  const std::size_t n = public_features.rows();
  const std::size_t classes = uploads.front().probs.cols();
  Matrix targets(n, classes);
  const double inv_k = 1.0 / static_cast<double>(uploads.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto t = targets.row(i);
    for (const auto& u : uploads) {
      auto p = u.probs.row(i);
      for (std::size_t c = 0; c < classes; ++c) t[c] += p[c] * inv_k;
    }
  }
  return distill_to_targets(public_features, targets, server_arch, train, "feddf");
}

std::vector<std::size_t> min_entropy_labels(const std::vector<PredictionUpload>& uploads) {
  if (uploads.empty()) throw PreconditionError("min_entropy_labels: no uploads");
  const std::size_t n = uploads.front().probs.rows();
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_entropy = entropy(uploads[0].probs.row(i));
    for (std::size_t k = 1; k < uploads.size(); ++k) {
      const double h = entropy(uploads[k].probs.row(i));
      if (h < best_entropy) {
        best = k;
        best_entropy = h;
      }
    }
    labels[i] = argmax(uploads[best].probs.row(i));
  }
  return labels;
}

MlpModel run_min_entropy(const std::vector<PredictionUpload>& uploads,
                         const Matrix& public_features,
                         const std::vector<std::size_t>& server_arch, const TrainConfig& train) {
  const std::vector<std::size_t> labels = min_entropy_labels(uploads);
  MlpModel server =
      init_mlp(server_arch, Activation::relu, mix_seed(train.seed, "min-entropy"));
  TrainConfig cfg = train;
  cfg.seed = mix_seed(train.seed, "min-entropy", 1);
  return train_supervised(std::move(server), public_features,
                          one_hot(labels, server_arch.back()), cfg);
}

}  // namespace fedol
