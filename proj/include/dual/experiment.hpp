#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dual/agents.hpp"
#include "dual/environment.hpp"
#include "dual/metrics.hpp"
#include "dual/replay.hpp"

namespace dual {

struct EnvironmentConfig {
  /// fig2 | cold_start | r6b_like
  std::string scenario = "fig2";
  std::vector<double> ctrs{0.3, 0.5, 0.4};
  std::size_t num_ads = 10;
  /// 0 keeps the scenario's own horizon.
  std::size_t horizon = 0;
  /// The world for seed s is drawn with scenario_seed + s.
  std::uint64_t scenario_seed = 1000;
  R6bShape r6b;
};

struct LogConfig {
  /// Empty means: synthesize a uniform log from the environment.
  std::string path;
  /// dual | r6b
  std::string format = "dual";
  std::size_t entries = 20000;
};

struct TrainConfig {
  std::size_t n_train = 500;
  std::size_t n_test = 2000;
  std::size_t vocab = 12;
  /// Any of dual | dnn.
  std::vector<std::string> models{"dual", "dnn"};
};

struct DiagnoseConfig {
  /// "{seed}" is replaced by the seed.
  std::string checkpoint;
  std::size_t bins = 10;
};

struct ExperimentConfig {
  /// train | simulate | replay | generate-log | diagnose
  std::string mode = "simulate";
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  EnvironmentConfig environment;
  LogConfig log;
  ModelSettings model = bandit_model_settings();
  double kappa = 1.0;
  double epsilon = 0.1;
  std::vector<std::string> agents{"dual-ts", "dual-ucb", "dual-greedy", "dnn-greedy", "dnn-eps-greedy", "random"};
  RunConfig run;
  ReplayConfig replay;
  TrainConfig train;
  DiagnoseConfig diagnose;

  /// Throws ConfigError.
  void validate() const;
};

const std::vector<std::string> &experiment_modes();

/// Bandit modes use bandit_model_settings(); train and diagnose keep the
/// plain ModelSettings defaults.
ExperimentConfig default_config(const std::string &mode);

nlohmann::json to_json(const ExperimentConfig &config);
/// Missing keys keep their defaults; unknown keys and bad types throw
/// ConfigError.
ExperimentConfig config_from_json(const nlohmann::json &json, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::string &path, ExperimentConfig base = {});

EnvironmentSpec build_environment(const EnvironmentConfig &config, std::uint64_t seed);

struct PredictionReport {
  std::size_t samples = 0;
  double auc = 0;
  double log_loss = 0;
  double mean_variance = 0;
  double extreme_fraction = 0;
  std::vector<double> probabilities;
};

/// Predictive click probabilities E_q[sigmoid(f)] on `data`, scored.
PredictionReport evaluate_predictions(const PosteriorModel &model, std::span<const Sample> data);

/// One row of summary.tsv.
struct SummaryRow {
  std::string group;
  std::string metric;
  SummaryStats stats;
};

/// Runs the configured mode for every seed, writing seed-<s>/ directories,
/// summary.tsv and config.json under config.out. `jobs` seeds run at once.
std::vector<SummaryRow> run_experiment(const ExperimentConfig &config, std::ostream &log, std::size_t jobs = 1);

void write_summary(std::ostream &os, std::span<const SummaryRow> rows);

}  // namespace dual
