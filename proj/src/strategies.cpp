#include "dual/strategies.hpp"

#include <cmath>

#include "dual/error.hpp"

namespace dual {

double score_dual_greedy(const PosteriorGaussian &post, double bid) { return sigmoid(post.mu) * bid; }

double score_dual_ucb(const PosteriorGaussian &post, double bid, double kappa) {
  return sigmoid(post.mu + kappa * std::sqrt(std::max(post.sigma2, 0.0))) * bid;
}

double score_dual_ts(const PosteriorGaussian &post, double bid, Rng &rng) {
  if (post.sigma2 <= 0) return score_dual_greedy(post, bid);
  return sigmoid(post.mu + std::sqrt(post.sigma2) * standard_normal(rng)) * bid;
}

std::size_t argmax_candidate(std::span<const AdCandidate> candidates, std::span<const double> scores) {
  if (candidates.empty()) throw EmptyCandidateSet("no candidates to rank");
  if (scores.size() != candidates.size()) throw ShapeError("argmax: score count differs from candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && candidates[i].id < candidates[best].id)) {
      best = i;
    }
  }
  return best;
}

namespace {

void require_candidates(std::span<const AdCandidate> candidates) {
  if (candidates.empty()) throw EmptyCandidateSet("no candidates to rank");
}

}  // namespace

ScoringStrategy::ScoringStrategy(ScoreRule rule, double kappa) : rule_(rule), kappa_(kappa) {
  if (kappa < 0) throw ConfigError("ucb: kappa must be >= 0");
}

std::string ScoringStrategy::name() const {
  switch (rule_) {
    case ScoreRule::kGreedy:
      return "greedy";
    case ScoreRule::kUcb:
      return "ucb";
    case ScoreRule::kThompson:
      return "ts";
  }
  return "?";
}

RankingDecision ScoringStrategy::decide(std::span<const AdCandidate> candidates,
                                        const SparseFeature &context, const PosteriorModel *model,
                                        Rng &rng) const {
  require_candidates(candidates);
  if (model == nullptr) throw ConfigError(name() + " strategy needs a model");
  RankingDecision decision;
  decision.strategy = name();
  decision.scores.reserve(candidates.size());
  for (const auto &ad : candidates) {
    const PosteriorGaussian post = model->posterior(concat(context, ad.features));
    double score = 0;
    switch (rule_) {
      case ScoreRule::kGreedy:
        score = score_dual_greedy(post, ad.bid);
        break;
      case ScoreRule::kUcb:
        score = score_dual_ucb(post, ad.bid, kappa_);
        break;
      case ScoreRule::kThompson:
        score = score_dual_ts(post, ad.bid, rng);
        if (post.sigma2 > 0) ++decision.rng_draws;
        break;
    }
    decision.scores.push_back(score);
  }
  decision.winner = candidates[argmax_candidate(candidates, decision.scores)].id;
  return decision;
}

RankingDecision RandomStrategy::decide(std::span<const AdCandidate> candidates, const SparseFeature &,
                                       const PosteriorModel *, Rng &rng) const {
  return random_strategy(candidates, rng);
}

RankingDecision random_strategy(std::span<const AdCandidate> candidates, Rng &rng) {
  require_candidates(candidates);
  RankingDecision decision;
  decision.strategy = "random";
  decision.scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) decision.scores.push_back(uniform01(rng));
  decision.rng_draws = candidates.size();
  decision.winner = candidates[argmax_candidate(candidates, decision.scores)].id;
  return decision;
}

EpsilonGreedy::EpsilonGreedy(std::shared_ptr<const Strategy> inner, double epsilon)
    : inner_(std::move(inner)), epsilon_(epsilon) {
  if (!inner_) throw ConfigError("epsilon-greedy needs an inner strategy");
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("epsilon must lie in [0, 1]");
}

std::string EpsilonGreedy::name() const { return "eps-" + inner_->name(); }

RankingDecision EpsilonGreedy::decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                      const PosteriorModel *model, Rng &rng) const {
  // The coin is only flipped when it can matter, so epsilon = 0 consumes
  // exactly the inner strategy's draws.
  bool explore = epsilon_ >= 1;
  std::size_t coin = 0;
  if (epsilon_ > 0 && epsilon_ < 1) {
    explore = uniform01(rng) < epsilon_;
    coin = 1;
  }
  RankingDecision decision =
      explore ? random_strategy(candidates, rng) : inner_->decide(candidates, context, model, rng);
  decision.rng_draws += coin;
  decision.strategy = name();
  return decision;
}

std::shared_ptr<const Strategy> epsilon_greedy_wrap(std::shared_ptr<const Strategy> inner, double epsilon) {
  return std::make_shared<const EpsilonGreedy>(std::move(inner), epsilon);
}

std::shared_ptr<const Strategy> make_strategy(const StrategyConfig &config) {
  std::shared_ptr<const Strategy> base;
  if (config.rule == "greedy") {
    base = std::make_shared<const ScoringStrategy>(ScoreRule::kGreedy);
  } else if (config.rule == "ucb") {
    base = std::make_shared<const ScoringStrategy>(ScoreRule::kUcb, config.kappa);
  } else if (config.rule == "ts") {
    base = std::make_shared<const ScoringStrategy>(ScoreRule::kThompson);
  } else if (config.rule == "random") {
    base = std::make_shared<const RandomStrategy>();
  } else {
    throw ConfigError("unknown strategy rule '" + config.rule + "'");
  }
  if (config.epsilon > 0) return epsilon_greedy_wrap(base, config.epsilon);
  if (config.epsilon < 0) throw ConfigError("epsilon must lie in [0, 1]");
  return base;
}

RankingDecision rank(std::span<const AdCandidate> candidates, const SparseFeature &context,
                     const PosteriorModel &model, const StrategyConfig &config, Rng &rng) {
  require_candidates(candidates);
  return make_strategy(config)->decide(candidates, context, &model, rng);
}

ModelAgent::ModelAgent(std::string name, std::unique_ptr<Learner> learner,
                       std::shared_ptr<const Strategy> strategy)
    : name_(std::move(name)), learner_(std::move(learner)), strategy_(std::move(strategy)) {
  if (!learner_ || !strategy_) throw ConfigError("model agent needs a learner and a strategy");
  snapshot_ = learner_->snapshot();
}

RankingDecision ModelAgent::decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                   Rng &rng) {
  return strategy_->decide(candidates, context, snapshot_.get(), rng);
}

void ModelAgent::learn(std::span<const Sample> data, Rng &rng) {
  if (data.empty()) return;
  learner_->fit(data, rng);
  snapshot_ = learner_->snapshot();
}

FixedAgent::FixedAgent(std::string name, std::shared_ptr<const PosteriorModel> model,
                       std::shared_ptr<const Strategy> strategy)
    : name_(std::move(name)), model_(std::move(model)), strategy_(std::move(strategy)) {
  if (!strategy_) throw ConfigError("fixed agent needs a strategy");
}

RankingDecision FixedAgent::decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                   Rng &rng) {
  return strategy_->decide(candidates, context, model_.get(), rng);
}

RankingDecision RandomAgent::decide(std::span<const AdCandidate> candidates, const SparseFeature &,
                                    Rng &rng) {
  return random_strategy(candidates, rng);
}

}  // namespace dual
