#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedol/errors.hpp"
#include "fedol/harness.hpp"
#include "fedol/io.hpp"

namespace {

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fedol::Error("cannot write " + path.string());
  out << content;
}

int run_command(const std::string& config_path, const std::string& out_dir,
                long long seed_override, bool has_seed, const std::string& strategies) {
  fedol::ExperimentConfig cfg = fedol::load_config_file(config_path);
  if (has_seed) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!strategies.empty()) {
    cfg.strategies.clear();
    for (const std::string& name : fedol::split_csv_line(strategies)) {
      fedol::Strategy s;
      s.kind = fedol::parse_strategy_kind(name);
      s.rounds = cfg.rounds;
      s.mu = cfg.mu;
      cfg.strategies.push_back(s);
    }
    fedol::validate(cfg);
  }

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "config.resolved", fedol::resolve_config(cfg));

  const fedol::MetricsBundle bundle = fedol::run_experiment(cfg);

  {
    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    fedol::write_metrics_csv(bundle.rows, metrics, iso_timestamp());
  }
  {
    std::ofstream cost(dir / "cost.csv", std::ios::binary);
    fedol::write_cost_csv(bundle.costs, cost);
  }

  for (const fedol::MetricRow& row : bundle.rows) {
    const bool last_of_strategy =
        &row == &bundle.rows.back() || (&row + 1)->strategy != row.strategy;
    if (last_of_strategy) {
      std::cout << row.strategy << ": test_accuracy=" << fedol::format_double(row.test_accuracy)
                << " (round " << row.round << ")\n";
    }
  }
  for (const std::string& failure : bundle.failures) {
    std::cerr << "strategy failed: " << failure << '\n';
  }
  return bundle.failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot federated distillation simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  std::string out_dir = ".";
  std::string strategies;
  long long seed = 0;
  run->add_option("config", config_path, "Path to the experiment config")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the global seed");
  run->add_option("--out", out_dir, "Output directory for metrics.csv/cost.csv");
  run->add_option("--strategies", strategies, "Comma-separated strategy subset");

  CLI11_PARSE(app, argc, argv);

  try {
    return run_command(config_path, out_dir, seed, seed_opt->count() > 0, strategies);
  } catch (const fedol::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
