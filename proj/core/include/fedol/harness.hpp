#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedol/baselines.hpp"
#include "fedol/client.hpp"
#include "fedol/data.hpp"
#include "fedol/fedol.hpp"
#include "fedol/ledger.hpp"

namespace fedol {

// Full declarative description of one experiment. Defaults run a ten-client
// fleet with the standard training regime (50 epochs, batch 64, lr 0.001,
// tau 0.2, rho 0.1 + 0.05 per iteration) on a desk-scale synthetic task.
struct ExperimentConfig {
  // data
  std::size_t classes = 10;
  std::size_t dims = 16;
  std::size_t per_class = 200;
  double separation = 3.0;
  std::size_t public_count = 500;
  std::size_t test_count = 400;

  // partition
  PartitionSpec partition;

  // fleet: even client ids get the small hidden stack, odd the large one
  std::vector<std::size_t> hidden_small{16};
  std::vector<std::size_t> hidden_large{32, 16};

  // server
  std::vector<std::size_t> server_hidden{64, 32};

  // parameter-averaging methods use one uniform client architecture
  std::vector<std::size_t> fedavg_hidden{32, 16};

  // training
  TrainConfig train;

  // fedol
  double tau = 0.2;
  double rho_start = 0.1;
  double rho_step = 0.05;
  std::size_t iterations = 10;

  // baselines
  std::size_t rounds = 1;
  double mu = 0.01;

  // cost accounting byte widths
  std::size_t knowledge_bytes_per_value = 8;
  std::size_t parameter_bytes_per_value = 8;

  // run
  std::uint64_t seed = 0;
  std::vector<Strategy> strategies;

  ExperimentConfig();

  std::vector<std::size_t> client_arch(std::size_t client_id) const;
  std::vector<std::size_t> server_arch() const;
  std::vector<std::size_t> parameter_method_arch() const;
};

// Throws ConfigError on inconsistent counts or empty strategy lists.
void validate(const ExperimentConfig& cfg);

// Flat key-value text with [section] headers; '#' starts a comment. Unknown
// keys are errors with line numbers. Every key has a default.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// All defaults materialized, parseable again by parse_config.
std::string resolve_config(const ExperimentConfig& cfg);

struct CostReport {
  std::uint64_t upload_bytes = 0;     // per client per round, knowledge path
  std::uint64_t parameter_bytes = 0;  // per client per round, parameter path
  std::size_t rounds = 1;
  std::uint64_t comm_bytes_per_round = 0;  // the path this strategy actually uses
};

std::uint64_t knowledge_upload_bytes(std::size_t public_count, std::size_t classes,
                                     std::size_t bytes_per_value);
std::uint64_t parameter_transfer_bytes(std::size_t parameter_count,
                                       std::size_t bytes_per_value);
std::size_t mlp_parameter_count(const std::vector<std::size_t>& layer_sizes);

CostReport cost_report(const ExperimentConfig& cfg, const Strategy& strategy);

struct MetricRow {
  std::string strategy;
  std::size_t round = 1;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double abstain_fraction = 0.0;  // NaN for non-fedol rows
  double distill_loss = 0.0;      // NaN for non-fedol rows
  double pseudo_loss = 0.0;       // NaN for non-fedol rows
  std::uint64_t comm_bytes = 0;   // cumulative client->server bytes per client
};

struct MetricsBundle {
  std::vector<MetricRow> rows;
  std::vector<std::pair<std::string, CostReport>> costs;
  MessageLedger ledger;
  std::vector<std::string> failures;  // "strategy: what happened"
};

// generate -> hold out test -> split public -> partition -> local training ->
// uploads -> every configured strategy on the same uploads.
MetricsBundle run_experiment(const ExperimentConfig& cfg);

// Asserts every client in `phase` sent exactly one upload and received
// nothing. Throws LedgerError naming the offending client otherwise.
void one_shot_ledger_check(const MessageLedger& ledger, std::string_view phase,
                           std::size_t num_clients);

// `timestamp` is emitted as a comment line; pass empty to omit entirely.
void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out,
                       const std::string& timestamp);
std::vector<MetricRow> read_metrics_csv(std::istream& in);
void write_cost_csv(const std::vector<std::pair<std::string, CostReport>>& costs,
                    std::ostream& out);

inline constexpr std::string_view kKnowledgePhase = "knowledge";

}  // namespace fedol
