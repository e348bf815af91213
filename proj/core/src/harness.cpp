#include "fedol/harness.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fedol/errors.hpp"
#include "fedol/io.hpp"
#include "fedol/prob.hpp"
#include "fedol/rng.hpp"

namespace fedol {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> parse_size_list(std::string_view text, int line) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (const std::string& field : split_csv_line(text)) {
    const long long v = parse_int(field);
    if (v < 0) throw ConfigError("line " + std::to_string(line) + ": negative size");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(sizes[i]);
  }
  return out;
}

std::vector<StrategyKind> parse_strategy_list(std::string_view text, int line) {
  std::vector<StrategyKind> kinds;
  for (const std::string& field : split_csv_line(text)) {
    try {
      kinds.push_back(parse_strategy_kind(field));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  if (kinds.empty()) throw ConfigError("line " + std::to_string(line) + ": empty strategy list");
  return kinds;
}

void apply_strategy_defaults(ExperimentConfig& cfg) {
  for (Strategy& s : cfg.strategies) {
    s.rounds = cfg.rounds;
    s.mu = cfg.mu;
  }
}

std::string opt_double(double v) { return std::isnan(v) ? std::string() : format_double(v); }

double parse_opt_double(std::string_view s) {
  return trim(s).empty() ? kNaN : parse_double(s);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  partition.num_clients = 10;
  for (StrategyKind kind : {StrategyKind::fedol, StrategyKind::local, StrategyKind::fedavg,
                            StrategyKind::fedprox, StrategyKind::feddf,
                            StrategyKind::min_entropy}) {
    strategies.push_back({kind, rounds, mu});
  }
}

std::vector<std::size_t> ExperimentConfig::client_arch(std::size_t client_id) const {
  const auto& hidden = (client_id % 2 == 0) ? hidden_small : hidden_large;
  std::vector<std::size_t> arch{dims};
  arch.insert(arch.end(), hidden.begin(), hidden.end());
  arch.push_back(classes);
  return arch;
}

std::vector<std::size_t> ExperimentConfig::server_arch() const {
  std::vector<std::size_t> arch{dims};
  arch.insert(arch.end(), server_hidden.begin(), server_hidden.end());
  arch.push_back(classes);
  return arch;
}

std::vector<std::size_t> ExperimentConfig::parameter_method_arch() const {
  std::vector<std::size_t> arch{dims};
  arch.insert(arch.end(), fedavg_hidden.begin(), fedavg_hidden.end());
  arch.push_back(classes);
  return arch;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("data.classes: need >= 2");
  if (cfg.dims < 2) throw ConfigError("data.dims: need >= 2");
  if (cfg.per_class < 1) throw ConfigError("data.per_class: need >= 1");
  if (!(cfg.separation >= 0.0)) throw ConfigError("data.separation: must be >= 0");
  const std::size_t total = cfg.classes * cfg.per_class;
  if (cfg.test_count + cfg.public_count >= total) {
    throw ConfigError("data: test_count + public_count must leave private samples");
  }
  const std::size_t private_count = total - cfg.test_count - cfg.public_count;
  if (private_count < cfg.partition.num_clients) {
    throw ConfigError("data: fewer private samples than clients");
  }
  if (cfg.partition.num_clients < 1) throw ConfigError("partition.num_clients: need >= 1");
  if (cfg.partition.scheme == PartitionSpec::Scheme::dirichlet && !(cfg.partition.alpha > 0.0)) {
    throw ConfigError("partition.alpha: must be > 0");
  }
  if (cfg.partition.scheme == PartitionSpec::Scheme::pathological) {
    if (cfg.partition.classes_per_client < 1 ||
        cfg.partition.classes_per_client > cfg.classes) {
      throw ConfigError("partition.classes_per_client: out of range");
    }
    if (cfg.partition.num_clients * cfg.partition.classes_per_client < cfg.classes) {
      throw ConfigError("partition: num_clients * classes_per_client < classes");
    }
  }
  if (cfg.train.epochs < 1) throw ConfigError("train.epochs: need >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size: need >= 1");
  if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be > 0");
  if (!(cfg.tau >= 0.0)) throw ConfigError("fedol.tau: must be >= 0");
  if (!(cfg.rho_start > 0.0 && cfg.rho_start <= 1.0)) {
    throw ConfigError("fedol.rho_start: must be in (0, 1]");
  }
  if (!(cfg.rho_step >= 0.0)) throw ConfigError("fedol.rho_step: must be >= 0");
  if (cfg.iterations < 1) throw ConfigError("fedol.iterations: need >= 1");
  if (cfg.rounds < 1) throw ConfigError("baselines.rounds: need >= 1");
  if (!(cfg.mu >= 0.0)) throw ConfigError("baselines.mu: must be >= 0");
  if (cfg.knowledge_bytes_per_value < 1 || cfg.parameter_bytes_per_value < 1) {
    throw ConfigError("cost: bytes_per_value must be >= 1");
  }
  if (cfg.strategies.empty()) throw ConfigError("run.strategies: empty");
  bool knowledge = false;
  for (const Strategy& s : cfg.strategies) knowledge |= is_knowledge_strategy(s.kind);
  if (knowledge && cfg.public_count < 1) {
    throw ConfigError("data.public_count: knowledge strategies need a public pool");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view sv = raw;
    if (const auto hash = sv.find('#'); hash != std::string_view::npos) {
      sv = sv.substr(0, hash);
    }
    sv = trim(sv);
    if (sv.empty()) continue;
    if (sv.front() == '[') {
      if (sv.back() != ']') {
        throw ConfigError("line " + std::to_string(line) + ": unterminated section header");
      }
      section = std::string(trim(sv.substr(1, sv.size() - 2)));
      continue;
    }
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = std::string(trim(sv.substr(0, eq)));
    const std::string_view value = trim(sv.substr(eq + 1));
    const std::string where = section + "." + key;

    try {
      if (where == "data.classes") cfg.classes = parse_int(value);
      else if (where == "data.dims") cfg.dims = parse_int(value);
      else if (where == "data.per_class") cfg.per_class = parse_int(value);
      else if (where == "data.separation") cfg.separation = parse_double(value);
      else if (where == "data.public_count") cfg.public_count = parse_int(value);
      else if (where == "data.test_count") cfg.test_count = parse_int(value);
      else if (where == "partition.scheme") {
        if (value == "dirichlet") cfg.partition.scheme = PartitionSpec::Scheme::dirichlet;
        else if (value == "pathological") {
          cfg.partition.scheme = PartitionSpec::Scheme::pathological;
        } else {
          throw ConfigError("scheme must be 'dirichlet' or 'pathological'");
        }
      } else if (where == "partition.alpha") cfg.partition.alpha = parse_double(value);
      else if (where == "partition.classes_per_client") {
        cfg.partition.classes_per_client = parse_int(value);
      } else if (where == "partition.num_clients") cfg.partition.num_clients = parse_int(value);
      else if (where == "fleet.hidden_small") cfg.hidden_small = parse_size_list(value, line);
      else if (where == "fleet.hidden_large") cfg.hidden_large = parse_size_list(value, line);
      else if (where == "server.hidden") cfg.server_hidden = parse_size_list(value, line);
      else if (where == "train.epochs") cfg.train.epochs = parse_int(value);
      else if (where == "train.batch_size") cfg.train.batch_size = parse_int(value);
      else if (where == "train.learning_rate") cfg.train.learning_rate = parse_double(value);
      else if (where == "fedol.tau") cfg.tau = parse_double(value);
      else if (where == "fedol.rho_start") cfg.rho_start = parse_double(value);
      else if (where == "fedol.rho_step") cfg.rho_step = parse_double(value);
      else if (where == "fedol.iterations") cfg.iterations = parse_int(value);
      else if (where == "baselines.rounds") cfg.rounds = parse_int(value);
      else if (where == "baselines.mu") cfg.mu = parse_double(value);
      else if (where == "baselines.fedavg_hidden") {
        cfg.fedavg_hidden = parse_size_list(value, line);
      } else if (where == "cost.knowledge_bytes_per_value") {
        cfg.knowledge_bytes_per_value = parse_int(value);
      } else if (where == "cost.parameter_bytes_per_value") {
        cfg.parameter_bytes_per_value = parse_int(value);
      } else if (where == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (where == "run.strategies") {
        cfg.strategies.clear();
        for (StrategyKind kind : parse_strategy_list(value, line)) {
          cfg.strategies.push_back({kind, cfg.rounds, cfg.mu});
        }
      } else {
        throw ConfigError("unknown key '" + where + "'");
      }
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.starts_with("line ")) throw;
      throw ConfigError("line " + std::to_string(line) + ": " + msg);
    }
  }
  apply_strategy_defaults(cfg);
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string resolve_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[data]\n";
  out << "classes = " << cfg.classes << '\n';
  out << "dims = " << cfg.dims << '\n';
  out << "per_class = " << cfg.per_class << '\n';
  out << "separation = " << format_double(cfg.separation) << '\n';
  out << "public_count = " << cfg.public_count << '\n';
  out << "test_count = " << cfg.test_count << '\n';
  out << "\n[partition]\n";
  out << "scheme = "
      << (cfg.partition.scheme == PartitionSpec::Scheme::dirichlet ? "dirichlet"
                                                                   : "pathological")
      << '\n';
  out << "alpha = " << format_double(cfg.partition.alpha) << '\n';
  out << "classes_per_client = " << cfg.partition.classes_per_client << '\n';
  out << "num_clients = " << cfg.partition.num_clients << '\n';
  out << "\n[fleet]\n";
  out << "hidden_small = " << join_sizes(cfg.hidden_small) << '\n';
  out << "hidden_large = " << join_sizes(cfg.hidden_large) << '\n';
  out << "\n[server]\n";
  out << "hidden = " << join_sizes(cfg.server_hidden) << '\n';
  out << "\n[train]\n";
  out << "epochs = " << cfg.train.epochs << '\n';
  out << "batch_size = " << cfg.train.batch_size << '\n';
  out << "learning_rate = " << format_double(cfg.train.learning_rate) << '\n';
  out << "\n[fedol]\n";
  out << "tau = " << format_double(cfg.tau) << '\n';
  out << "rho_start = " << format_double(cfg.rho_start) << '\n';
  out << "rho_step = " << format_double(cfg.rho_step) << '\n';
  out << "iterations = " << cfg.iterations << '\n';
  out << "\n[baselines]\n";
  out << "rounds = " << cfg.rounds << '\n';
  out << "mu = " << format_double(cfg.mu) << '\n';
  out << "fedavg_hidden = " << join_sizes(cfg.fedavg_hidden) << '\n';
  out << "\n[cost]\n";
  out << "knowledge_bytes_per_value = " << cfg.knowledge_bytes_per_value << '\n';
  out << "parameter_bytes_per_value = " << cfg.parameter_bytes_per_value << '\n';
  out << "\n[run]\n";
  out << "seed = " << cfg.seed << '\n';
  out << "strategies = ";
  for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
    if (i > 0) out << ',';
    out << strategy_name(cfg.strategies[i].kind);
  }
  out << '\n';
  return out.str();
}

std::uint64_t knowledge_upload_bytes(std::size_t public_count, std::size_t classes,
                                     std::size_t bytes_per_value) {
  return static_cast<std::uint64_t>(public_count) * classes * bytes_per_value;
}

std::uint64_t parameter_transfer_bytes(std::size_t parameter_count,
                                       std::size_t bytes_per_value) {
  return static_cast<std::uint64_t>(parameter_count) * bytes_per_value;
}

std::size_t mlp_parameter_count(const std::vector<std::size_t>& layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  }
  return n;
}

CostReport cost_report(const ExperimentConfig& cfg, const Strategy& strategy) {
  CostReport report;
  report.upload_bytes =
      knowledge_upload_bytes(cfg.public_count, cfg.classes, cfg.knowledge_bytes_per_value);
  report.parameter_bytes = parameter_transfer_bytes(
      mlp_parameter_count(cfg.parameter_method_arch()), cfg.parameter_bytes_per_value);
  const bool multi_round =
      strategy.kind == StrategyKind::fedavg || strategy.kind == StrategyKind::fedprox;
  report.rounds = multi_round ? strategy.rounds : 1;
  report.comm_bytes_per_round =
      is_knowledge_strategy(strategy.kind) ? report.upload_bytes : report.parameter_bytes;
  return report;
}

void one_shot_ledger_check(const MessageLedger& ledger, std::string_view phase,
                           std::size_t num_clients) {
  for (std::size_t k = 0; k < num_clients; ++k) {
    const auto counts = ledger.counts(phase, k);
    if (counts.uploads != 1) {
      throw LedgerError("one-shot violation: client " + std::to_string(k) + " sent " +
                        std::to_string(counts.uploads) + " uploads (expected 1)");
    }
    if (counts.downloads != 0) {
      throw LedgerError("one-shot violation: client " + std::to_string(k) + " received " +
                        std::to_string(counts.downloads) + " server messages (expected 0)");
    }
  }
}

MetricsBundle run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  MetricsBundle bundle;

  const Dataset full = make_synthetic(cfg.classes, cfg.dims, cfg.per_class, cfg.separation,
                                      mix_seed(cfg.seed, "data-generate"));
  auto [test, rest] = split_labeled(full, cfg.test_count, mix_seed(cfg.seed, "test-split"));
  auto [public_labeled, private_set] =
      split_labeled(rest, cfg.public_count, mix_seed(cfg.seed, "public-split"));
  const Matrix& public_features = public_labeled.features;

  PartitionSpec pspec = cfg.partition;
  pspec.seed = mix_seed(cfg.seed, "partition");
  const std::vector<Dataset> shards = partition(private_set, pspec);

  const std::size_t num_clients = cfg.partition.num_clients;
  std::vector<ClientSpec> fleet;
  for (std::size_t k = 0; k < num_clients; ++k) {
    TrainConfig train = cfg.train;
    train.seed = mix_seed(cfg.seed, "client", k);
    fleet.push_back({k, cfg.client_arch(k), train});
  }

  bool need_uploads = false;
  for (const Strategy& s : cfg.strategies) need_uploads |= is_knowledge_strategy(s.kind);

  std::vector<PredictionUpload> uploads;
  if (need_uploads) {
    const std::uint64_t upload_bytes =
        knowledge_upload_bytes(cfg.public_count, cfg.classes, cfg.knowledge_bytes_per_value);
    for (std::size_t k = 0; k < num_clients; ++k) {
      const MlpModel model = local_train(fleet[k], shards[k]);
      uploads.push_back(predict_public(k, model, public_features));
      bundle.ledger.record_upload(kKnowledgePhase, k, upload_bytes);
    }
  }

  for (const Strategy& strategy : cfg.strategies) {
    const std::string name(strategy_name(strategy.kind));
    const CostReport cost = cost_report(cfg, strategy);
    bundle.costs.emplace_back(name, cost);
    try {
      switch (strategy.kind) {
        case StrategyKind::local: {
          const LocalResult res = run_local(shards, fleet, test);
          bundle.rows.push_back({name, 1, cfg.seed, res.mean, kNaN, kNaN, kNaN,
                                 cost.comm_bytes_per_round});
          break;
        }
        case StrategyKind::fedavg:
        case StrategyKind::fedprox: {
          std::vector<ClientSpec> uniform = fleet;
          for (ClientSpec& s : uniform) s.arch = cfg.parameter_method_arch();
          TrainConfig train = cfg.train;
          train.seed = mix_seed(cfg.seed, "strategy-" + name);
          std::vector<MlpModel> round_models;
          if (strategy.kind == StrategyKind::fedavg) {
            run_fedavg(shards, uniform, strategy.rounds, train, &bundle.ledger, &round_models);
          } else {
            run_fedprox(shards, uniform, strategy.rounds, strategy.mu, train, &bundle.ledger,
                        &round_models);
          }
          for (std::size_t r = 0; r < round_models.size(); ++r) {
            const double acc = accuracy(round_models[r], test.features, test.labels);
            bundle.rows.push_back({name, r + 1, cfg.seed, acc, kNaN, kNaN, kNaN,
                                   cost.comm_bytes_per_round * (r + 1)});
          }
          break;
        }
        case StrategyKind::feddf: {
          TrainConfig train = cfg.train;
          train.seed = mix_seed(cfg.seed, "strategy-feddf");
          const MlpModel server = run_feddf(uploads, public_features, cfg.server_arch(), train);
          bundle.rows.push_back({name, 1, cfg.seed,
                                 accuracy(server, test.features, test.labels), kNaN, kNaN, kNaN,
                                 cost.comm_bytes_per_round});
          break;
        }
        case StrategyKind::min_entropy: {
          TrainConfig train = cfg.train;
          train.seed = mix_seed(cfg.seed, "strategy-min-entropy");
          const MlpModel server =
              run_min_entropy(uploads, public_features, cfg.server_arch(), train);
          bundle.rows.push_back({name, 1, cfg.seed,
                                 accuracy(server, test.features, test.labels), kNaN, kNaN, kNaN,
                                 cost.comm_bytes_per_round});
          break;
        }
        case StrategyKind::fedol: {
          FedolOptions opt;
          opt.server_arch = cfg.server_arch();
          opt.schedule = {cfg.rho_start, cfg.rho_step};
          opt.tau = cfg.tau;
          opt.iterations = cfg.iterations;
          opt.train = cfg.train;
          opt.seed = mix_seed(cfg.seed, "strategy-fedol");
          FedolEval eval{&public_labeled.labels, &test};
          const FedolResult result = run_fedol(uploads, public_features, opt, &eval);
          for (const FedolIterationStats& it : result.history) {
            bundle.rows.push_back({name, it.iteration, cfg.seed, it.test_accuracy,
                                   it.abstain_fraction, it.distill_loss, it.pseudo_loss,
                                   cost.comm_bytes_per_round});
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      bundle.failures.push_back(name + ": " + e.what());
    }
  }

  if (need_uploads) {
    one_shot_ledger_check(bundle.ledger, kKnowledgePhase, num_clients);
  }
  return bundle;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out,
                       const std::string& timestamp) {
  if (!timestamp.empty()) out << "# generated " << timestamp << '\n';
  out << "strategy,round,seed,test_accuracy,abstain_fraction,L_d,L_u,comm_bytes\n";
  for (const MetricRow& row : rows) {
    out << row.strategy << ',' << row.round << ',' << row.seed << ','
        << format_double(row.test_accuracy) << ',' << opt_double(row.abstain_fraction) << ','
        << opt_double(row.distill_loss) << ',' << opt_double(row.pseudo_loss) << ','
        << row.comm_bytes << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    const std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (!seen_header) {
      if (sv != "strategy,round,seed,test_accuracy,abstain_fraction,L_d,L_u,comm_bytes") {
        throw ConfigError("metrics csv: unexpected header");
      }
      seen_header = true;
      continue;
    }
    const auto fields = split_csv_line(sv);
    if (fields.size() != 8) throw ConfigError("metrics csv: bad row width");
    MetricRow row;
    row.strategy = fields[0];
    row.round = static_cast<std::size_t>(parse_int(fields[1]));
    row.seed = static_cast<std::uint64_t>(parse_int(fields[2]));
    row.test_accuracy = parse_double(fields[3]);
    row.abstain_fraction = parse_opt_double(fields[4]);
    row.distill_loss = parse_opt_double(fields[5]);
    row.pseudo_loss = parse_opt_double(fields[6]);
    row.comm_bytes = static_cast<std::uint64_t>(parse_int(fields[7]));
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw ConfigError("metrics csv: missing header");
  return rows;
}

void write_cost_csv(const std::vector<std::pair<std::string, CostReport>>& costs,
                    std::ostream& out) {
  out << "strategy,rounds,upload_bytes_per_client,parameter_bytes_per_client,"
         "comm_bytes_per_round,total_comm_bytes\n";
  for (const auto& [name, cost] : costs) {
    out << name << ',' << cost.rounds << ',' << cost.upload_bytes << ','
        << cost.parameter_bytes << ',' << cost.comm_bytes_per_round << ','
        << cost.comm_bytes_per_round * cost.rounds << '\n';
  }
}

}  // namespace fedol
