#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dual/environment.hpp"
#include "dual/model.hpp"
#include "dual/strategies.hpp"

namespace dual {

/// Model hyperparameters shared by every learning agent in an experiment.
struct ModelSettings {
  std::size_t embed_dim = 6;
  double embed_init = 0.05;
  std::vector<std::size_t> hidden{16};
  std::size_t hidden_dim = 2;
  std::size_t inducing = 8;
  double amplitude = 0.3;
  double lengthscale = 1.5;
  /// Constant prior mean of the latent logit.
  double prior_mean = 0.0;
  double jitter = 1e-6;
  /// Hidden layers of the plain logit baseline.
  std::vector<std::size_t> dnn_hidden{16, 8};
  FitConfig fit;
};

/// Settings used for the bandit experiments: a wider prior (a = 1, l = 1)
/// so low-CTR logits stay reachable, 16 inducing points, and refits capped
/// at 100 Adam steps.
ModelSettings bandit_model_settings();

/// `model` is one of dual | dnn | random | oracle.
struct AgentSettings {
  std::string name;
  std::string model = "dual";
  StrategyConfig strategy;
};

/// DUAL-TS, DUAL-UCB, DUAL-Greedy, DNN-Greedy, DNN-eps-Greedy and Random.
std::vector<AgentSettings> standard_agents(double kappa = 1.0, double epsilon = 0.1);

AgentSettings find_agent(const std::vector<AgentSettings> &agents, const std::string &name);

/// `spec` must outlive an oracle agent.
std::unique_ptr<Agent> make_agent(const AgentSettings &agent, const ModelSettings &model,
                                  const std::vector<std::size_t> &vocab_sizes, const EnvironmentSpec *spec,
                                  Rng &rng);

DualModelConfig dual_config(const ModelSettings &model, const std::vector<std::size_t> &vocab_sizes);
MappingArch dnn_arch(const ModelSettings &model, const std::vector<std::size_t> &vocab_sizes);

}  // namespace dual
