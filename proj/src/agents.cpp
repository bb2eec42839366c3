#include "dual/agents.hpp"

#include "dual/error.hpp"

namespace dual {

std::vector<AgentSettings> standard_agents(double kappa, double epsilon) {
  return {
      {"dual-ts", "dual", {"ts", kappa, 0.0}},
      {"dual-ucb", "dual", {"ucb", kappa, 0.0}},
      {"dual-greedy", "dual", {"greedy", kappa, 0.0}},
      {"dnn-greedy", "dnn", {"greedy", kappa, 0.0}},
      {"dnn-eps-greedy", "dnn", {"greedy", kappa, epsilon}},
      {"random", "random", {"random", kappa, 0.0}},
  };
}

ModelSettings bandit_model_settings() {
  ModelSettings model;
  model.amplitude = 1.0;
  model.lengthscale = 1.0;
  model.inducing = 16;
  model.fit.epochs = 100;
  model.fit.max_steps = 100;
  model.fit.learning_rate = 0.02;
  return model;
}

AgentSettings find_agent(const std::vector<AgentSettings> &agents, const std::string &name) {
  for (const auto &a : agents) {
    if (a.name == name) return a;
  }
  throw ConfigError("unknown agent '" + name + "'");
}

DualModelConfig dual_config(const ModelSettings &model, const std::vector<std::size_t> &vocab_sizes) {
  if (model.inducing < 1) throw ConfigError("inducing points M must be >= 1");
  if (!(model.amplitude > 0) || !(model.lengthscale > 0)) throw ConfigError("kernel a and l must be > 0");
  DualModelConfig config;
  config.arch.vocab_sizes = vocab_sizes;
  config.arch.embed_dim = model.embed_dim;
  config.arch.embed_init = model.embed_init;
  config.arch.hidden = model.hidden;
  config.arch.output_dim = model.hidden_dim;
  config.inducing = static_cast<Index>(model.inducing);
  config.prior.kernel = RbfParams::from(model.amplitude, model.lengthscale);
  config.prior.mean.constant = model.prior_mean;
  config.prior.jitter = model.jitter;
  return config;
}

MappingArch dnn_arch(const ModelSettings &model, const std::vector<std::size_t> &vocab_sizes) {
  MappingArch arch;
  arch.vocab_sizes = vocab_sizes;
  arch.embed_dim = model.embed_dim;
  arch.embed_init = model.embed_init;
  arch.hidden = model.dnn_hidden;
  arch.output_dim = 1;
  return arch;
}

std::unique_ptr<Agent> make_agent(const AgentSettings &agent, const ModelSettings &model,
                                  const std::vector<std::size_t> &vocab_sizes, const EnvironmentSpec *spec,
                                  Rng &rng) {
  if (agent.model == "random") return std::make_unique<RandomAgent>();
  if (agent.model == "oracle") {
    if (spec == nullptr) throw ConfigError("oracle agent needs an environment");
    return std::make_unique<OracleAgent>(*spec);
  }
  auto strategy = make_strategy(agent.strategy);
  if (agent.model == "dual") {
    return std::make_unique<ModelAgent>(
        agent.name, std::make_unique<DualLearner>(dual_config(model, vocab_sizes), model.fit, rng), strategy);
  }
  if (agent.model == "dnn") {
    return std::make_unique<ModelAgent>(
        agent.name, std::make_unique<LogitLearner>(dnn_arch(model, vocab_sizes), model.fit, rng), strategy);
  }
  throw ConfigError("unknown agent model '" + agent.model + "'");
}

}  // namespace dual
