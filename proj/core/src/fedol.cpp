#include "fedol/fedol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedol/errors.hpp"
#include "fedol/prob.hpp"
#include "fedol/rng.hpp"

namespace fedol {

namespace {

// ceil(rho * n) as a rank in [1, n], guarded against float noise in the product.
std::size_t admitted_rank(double rho, std::size_t n) {
  const double k = std::ceil(rho * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

std::vector<double> row_entropies(const Matrix& probs) {
  std::vector<double> h(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) h[i] = entropy(probs.row(i));
  return h;
}

void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw PreconditionError("rho must be in (0, 1]");
  }
}

}  // namespace

std::size_t PseudoLabelSet::abstain_count() const {
  std::size_t n = 0;
  for (const auto& l : labels) {
    if (!l.has_value()) ++n;
  }
  return n;
}

double PseudoLabelSet::abstain_fraction() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(abstain_count()) / static_cast<double>(labels.size());
}

double RhoSchedule::at(std::size_t t) const {
  return std::min(1.0, rho_start + static_cast<double>(t) * rho_step);
}

ClassConfidence class_confidence(const Matrix& probs) {
  if (probs.rows() == 0) throw PreconditionError("class_confidence: empty matrix");
  std::vector<double> scores(probs.cols(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) scores[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(probs.rows());
  for (double& s : scores) s *= inv;
  return {std::move(scores)};
}

double entropy_baseline(const Matrix& probs, double rho) {
  check_rho(rho);
  if (probs.rows() == 0) throw PreconditionError("entropy_baseline: empty matrix");
  std::vector<double> h = row_entropies(probs);
  const std::size_t rank = admitted_rank(rho, h.size());
  std::nth_element(h.begin(), h.begin() + (rank - 1), h.end());
  return h[rank - 1];
}

std::vector<std::size_t> reliable_set(const std::vector<std::vector<double>>& sample_probs,
                                      const std::vector<double>& baselines) {
  if (sample_probs.size() != baselines.size()) {
    throw ShapeError("reliable_set: probs/baselines misaligned");
  }
  std::vector<std::size_t> reliable;
  for (std::size_t m = 0; m < sample_probs.size(); ++m) {
    if (entropy(sample_probs[m]) <= baselines[m]) reliable.push_back(m);
  }
  return reliable;
}

std::vector<int> vote_vector(std::span<const double> probs) {
  std::vector<int> vote(probs.size(), -1);
  vote[argmax(probs)] = 1;
  return vote;
}

std::vector<double> aggregate_vote(const std::vector<std::vector<int>>& votes,
                                   const std::vector<ClassConfidence>& confidences) {
  if (votes.empty()) throw PreconditionError("aggregate_vote: empty model set");
  if (votes.size() != confidences.size()) {
    throw ShapeError("aggregate_vote: votes/confidences misaligned");
  }
  const std::size_t classes = votes.front().size();
  std::vector<double> g(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t m = 0; m < votes.size(); ++m) {
      const double w = confidences[m].scores[c];
      num += w * votes[m][c];
      den += w;
    }
    // den == 0 means no model puts any mass on c: maximal rejection.
    g[c] = den > 0.0 ? num / den : -1.0;
  }
  return g;
}

PseudoLabelSet generate_pseudo_labels(const std::vector<Matrix>& sources,
                                      const std::vector<ClassConfidence>& confidences,
                                      double rho) {
  check_rho(rho);
  if (sources.empty()) throw PreconditionError("generate_pseudo_labels: no source models");
  if (sources.size() != confidences.size()) {
    throw ShapeError("generate_pseudo_labels: sources/confidences misaligned");
  }
  const std::size_t n = sources.front().rows();
  const std::size_t classes = sources.front().cols();
  for (const Matrix& s : sources) {
    if (s.rows() != n || s.cols() != classes) {
      throw ShapeError("generate_pseudo_labels: source shapes differ");
    }
  }

  const std::size_t models = sources.size();
  std::vector<std::vector<double>> entropies(models);
  std::vector<double> baselines(models);
  const std::size_t rank = admitted_rank(rho, n);
  for (std::size_t m = 0; m < models; ++m) {
    entropies[m] = row_entropies(sources[m]);
    std::vector<double> sorted = entropies[m];
    std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
    baselines[m] = sorted[rank - 1];
  }

  PseudoLabelSet out;
  out.labels.resize(n);
  std::vector<double> g(classes);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    std::vector<double> den(classes, 0.0);
    bool any = false;
    for (std::size_t m = 0; m < models; ++m) {
      if (entropies[m][i] > baselines[m]) continue;
      any = true;
      const std::size_t top = argmax(sources[m].row(i));
      for (std::size_t c = 0; c < classes; ++c) {
        const double w = confidences[m].scores[c];
        g[c] += w * (c == top ? 1.0 : -1.0);
        den[c] += w;
      }
    }
    if (!any) continue;  // abstain
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = den[c] > 0.0 ? g[c] / den[c] : -1.0;
    }
    out.labels[i] = argmax(g);
  }
  return out;
}

std::vector<double> distill_weights(const std::vector<PredictionUpload>& uploads,
                                    std::size_t sample_index) {
  if (uploads.empty()) throw PreconditionError("distill_weights: no uploads");
  std::vector<double> neg_entropy(uploads.size());
  for (std::size_t k = 0; k < uploads.size(); ++k) {
    neg_entropy[k] = -entropy(uploads[k].probs.row(sample_index));
  }
  return softmax(neg_entropy).values;
}

Matrix distill_weight_matrix(const std::vector<PredictionUpload>& uploads) {
  if (uploads.empty()) throw PreconditionError("distill_weight_matrix: no uploads");
  const std::size_t n = uploads.front().probs.rows();
  Matrix lambda(n, uploads.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> w = distill_weights(uploads, i);
    auto row = lambda.row(i);
    std::copy(w.begin(), w.end(), row.begin());
  }
  return lambda;
}

ServerLoss server_loss(const MlpModel& server, const Matrix& public_features,
                       const std::vector<PredictionUpload>& uploads,
                       const PseudoLabelSet& pseudo, double tau) {
  if (uploads.empty()) throw PreconditionError("server_loss: no uploads");
  const std::size_t n = public_features.rows();
  if (pseudo.size() != n) throw ShapeError("server_loss: pseudo labels misaligned");
  for (const auto& u : uploads) {
    if (u.probs.rows() != n || u.probs.cols() != server.num_classes()) {
      throw ShapeError("server_loss: upload shape mismatch");
    }
  }

  const std::size_t classes = server.num_classes();
  const Matrix lambda = distill_weight_matrix(uploads);
  ForwardTrace trace = forward_trace(server, public_features);
  Matrix probs = trace.logits;
  softmax_rows(probs);

  const std::size_t labeled = n - pseudo.abstain_count();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_labeled = labeled > 0 ? 1.0 / static_cast<double>(labeled) : 0.0;

  ServerLoss out;
  Matrix dlogits(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = probs.row(i);
    auto d = dlogits.row(i);
    auto lam = lambda.row(i);
    for (std::size_t k = 0; k < uploads.size(); ++k) {
      auto teacher = uploads[k].probs.row(i);
      out.distill += lam[k] * kl_divergence(teacher, p) * inv_n;
      for (std::size_t c = 0; c < classes; ++c) {
        d[c] += lam[k] * (p[c] - teacher[c]) * inv_n;
      }
    }
    if (pseudo.labels[i].has_value()) {
      const std::size_t y = *pseudo.labels[i];
      out.pseudo -= std::log(std::max(p[y], kProbEps)) * inv_labeled;
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = (c == y) ? 1.0 : 0.0;
        d[c] += tau * (p[c] - target) * inv_labeled;
      }
    }
  }
  out.total = out.distill + tau * out.pseudo;
  out.grad = backward(server, public_features, trace, dlogits);
  return out;
}

namespace {

// One pass of mini-batch SGD epochs on the server objective with the pseudo
// labels held fixed. `teacher_mix` is the lambda-weighted mean of client
// predictions; `distill_const` the matching lambda-weighted teacher entropy
// term, so the batch loss matches the full objective in expectation.
void train_server_iteration(MlpModel& server, const Matrix& public_features,
                            const Matrix& teacher_mix, const std::vector<double>& distill_const,
                            const PseudoLabelSet& pseudo, double tau, const TrainConfig& cfg,
                            std::uint64_t shuffle_seed) {
  const std::size_t n = public_features.rows();
  const std::size_t classes = teacher_mix.cols();
  const std::size_t labeled = n - pseudo.abstain_count();
  // Scales batch pseudo-label sums so the epoch gradient matches a mean over
  // labeled samples only.
  const double label_scale =
      labeled > 0 ? static_cast<double>(n) / static_cast<double>(labeled) : 0.0;

  Rng rng(shuffle_seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = gather_rows(public_features, idx);

      ForwardTrace trace = forward_trace(server, xb);
      Matrix probs = trace.logits;
      softmax_rows(probs);

      double loss = 0.0;
      Matrix dlogits(len, classes);
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t b = 0; b < len; ++b) {
        const std::size_t i = idx[b];
        auto p = probs.row(b);
        auto d = dlogits.row(b);
        auto mix = teacher_mix.row(i);
        double ce_mix = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          ce_mix -= mix[c] * std::log(std::max(p[c], kProbEps));
          d[c] = (p[c] - mix[c]) * inv;
        }
        loss += (distill_const[i] + ce_mix) * inv;
        if (pseudo.labels[i].has_value()) {
          const std::size_t y = *pseudo.labels[i];
          const double w = tau * label_scale;
          loss -= w * std::log(std::max(p[y], kProbEps)) * inv;
          for (std::size_t c = 0; c < classes; ++c) {
            const double target = (c == y) ? 1.0 : 0.0;
            d[c] += w * (p[c] - target) * inv;
          }
        }
      }
      if (!std::isfinite(loss)) {
        throw TrainingDivergedError("run_fedol: server loss became non-finite");
      }
      Gradients grads = backward(server, xb, trace, dlogits);
      sgd_step(server, grads, cfg.learning_rate);
    }
  }
}

double pseudo_accuracy(const PseudoLabelSet& pseudo, const std::vector<std::size_t>& truth) {
  std::size_t hits = 0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (!pseudo.labels[i].has_value()) continue;
    ++labeled;
    if (*pseudo.labels[i] == truth[i]) ++hits;
  }
  if (labeled == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(hits) / static_cast<double>(labeled);
}

}  // namespace

FedolResult run_fedol(const std::vector<PredictionUpload>& uploads,
                      const Matrix& public_features, const FedolOptions& opt,
                      const FedolEval* eval) {
  if (opt.iterations < 1) throw PreconditionError("run_fedol: iterations must be >= 1");
  if (uploads.empty()) throw PreconditionError("run_fedol: no uploads");
  if (!(opt.schedule.rho_start > 0.0 && opt.schedule.rho_start <= 1.0) ||
      !(opt.schedule.rho_step >= 0.0)) {
    throw PreconditionError("run_fedol: invalid rho schedule");
  }
  const std::size_t n = public_features.rows();
  const std::size_t classes = uploads.front().probs.cols();

  std::vector<Matrix> client_sources;
  std::vector<ClassConfidence> client_confidences;
  client_sources.reserve(uploads.size());
  for (const auto& u : uploads) {
    if (u.probs.rows() != n) throw ShapeError("run_fedol: upload rows != public pool size");
    client_sources.push_back(u.probs);
    client_confidences.push_back(class_confidence(u.probs));
  }

  // Fixed across iterations: uploads never change after the one-shot round.
  const Matrix lambda = distill_weight_matrix(uploads);
  Matrix teacher_mix(n, classes);
  std::vector<double> distill_const(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto mix = teacher_mix.row(i);
    auto lam = lambda.row(i);
    for (std::size_t k = 0; k < uploads.size(); ++k) {
      auto teacher = uploads[k].probs.row(i);
      for (std::size_t c = 0; c < classes; ++c) mix[c] += lam[k] * teacher[c];
      distill_const[i] -= lam[k] * entropy(teacher);
    }
  }

  MlpModel server =
      init_mlp(opt.server_arch, Activation::relu, mix_seed(opt.seed, "server-init"));

  FedolResult result{std::move(server), {}};
  for (std::size_t t = 0; t < opt.iterations; ++t) {
    const double rho = opt.schedule.at(t);

    std::vector<Matrix> sources = client_sources;
    std::vector<ClassConfidence> confidences = client_confidences;
    if (t > 0) {
      // The server joins the source set with fresh predictions each round.
      Matrix server_probs = forward(result.server, public_features);
      softmax_rows(server_probs);
      confidences.push_back(class_confidence(server_probs));
      sources.push_back(std::move(server_probs));
    }
    const PseudoLabelSet pseudo = generate_pseudo_labels(sources, confidences, rho);

    TrainConfig cfg = opt.train;
    cfg.seed = mix_seed(opt.seed, "server-train", t);
    train_server_iteration(result.server, public_features, teacher_mix, distill_const, pseudo,
                           opt.tau, cfg, cfg.seed);

    FedolIterationStats stats;
    stats.iteration = t + 1;
    stats.rho = rho;
    stats.abstain_fraction = pseudo.abstain_fraction();
    const ServerLoss loss = server_loss(result.server, public_features, uploads, pseudo, opt.tau);
    stats.distill_loss = loss.distill;
    stats.pseudo_loss = loss.pseudo;
    stats.pseudo_label_accuracy = std::numeric_limits<double>::quiet_NaN();
    stats.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (eval != nullptr && eval->public_labels != nullptr) {
      stats.pseudo_label_accuracy = pseudo_accuracy(pseudo, *eval->public_labels);
    }
    if (eval != nullptr && eval->test_set != nullptr) {
      stats.test_accuracy =
          accuracy(result.server, eval->test_set->features, eval->test_set->labels);
    }
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace fedol
