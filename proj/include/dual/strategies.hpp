#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dual/mapping.hpp"
#include "dual/model.hpp"
#include "dual/random.hpp"
#include "dual/svgp.hpp"

namespace dual {

struct AdCandidate {
  std::size_t id = 0;
  SparseFeature features;
  double bid = 1.0;
};

struct RankingDecision {
  std::size_t winner = 0;
  /// Parallel to the candidate list.
  std::vector<double> scores;
  std::string strategy;
  std::size_t rng_draws = 0;
};

double score_dual_greedy(const PosteriorGaussian &post, double bid);
double score_dual_ucb(const PosteriorGaussian &post, double bid, double kappa);
/// One fresh draw f ~ N(mu, sigma2); returns sigmoid(f) * bid. No draw is
/// taken when sigma2 is zero.
double score_dual_ts(const PosteriorGaussian &post, double bid, Rng &rng);

/// Index (into `candidates`) of the best score; ties go to the lowest ad id.
std::size_t argmax_candidate(std::span<const AdCandidate> candidates, std::span<const double> scores);

/// A ranking rule. `model` may be null for rules that ignore beliefs.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                 const PosteriorModel *model, Rng &rng) const = 0;
  virtual std::string name() const = 0;
};

enum class ScoreRule { kGreedy, kUcb, kThompson };

class ScoringStrategy final : public Strategy {
 public:
  explicit ScoringStrategy(ScoreRule rule, double kappa = 1.0);
  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         const PosteriorModel *model, Rng &rng) const override;
  std::string name() const override;

 private:
  ScoreRule rule_;
  double kappa_;
};

/// Uniform choice, realized as independent U(0,1) scores so the winner
/// still attains the maximum score.
class RandomStrategy final : public Strategy {
 public:
  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         const PosteriorModel *model, Rng &rng) const override;
  std::string name() const override { return "random"; }
};

class EpsilonGreedy final : public Strategy {
 public:
  EpsilonGreedy(std::shared_ptr<const Strategy> inner, double epsilon);
  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         const PosteriorModel *model, Rng &rng) const override;
  std::string name() const override;

 private:
  std::shared_ptr<const Strategy> inner_;
  double epsilon_;
};

RankingDecision random_strategy(std::span<const AdCandidate> candidates, Rng &rng);

std::shared_ptr<const Strategy> epsilon_greedy_wrap(std::shared_ptr<const Strategy> inner, double epsilon);

struct StrategyConfig {
  /// greedy | ucb | ts | random
  std::string rule = "greedy";
  double kappa = 1.0;
  double epsilon = 0.0;
};

std::shared_ptr<const Strategy> make_strategy(const StrategyConfig &config);

/// Scores every candidate on x = [context, ad features] and returns the
/// argmax. Throws EmptyCandidateSet.
RankingDecision rank(std::span<const AdCandidate> candidates, const SparseFeature &context,
                     const PosteriorModel &model, const StrategyConfig &config, Rng &rng);

/// What the simulator and the replay evaluator talk to.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                 Rng &rng) = 0;
  /// Called with every sample collected so far at each update point.
  virtual void learn(std::span<const Sample> data, Rng &rng) = 0;
  virtual std::string name() const = 0;
};

/// Strategy over a learner that is refit at each update and re-snapshotted.
class ModelAgent final : public Agent {
 public:
  ModelAgent(std::string name, std::unique_ptr<Learner> learner, std::shared_ptr<const Strategy> strategy);

  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         Rng &rng) override;
  void learn(std::span<const Sample> data, Rng &rng) override;
  std::string name() const override { return name_; }
  const Learner &learner() const { return *learner_; }

 private:
  std::string name_;
  std::unique_ptr<Learner> learner_;
  std::shared_ptr<const Strategy> strategy_;
  std::shared_ptr<const PosteriorModel> snapshot_;
};

/// Strategy over a frozen model; learn() is a no-op.
class FixedAgent final : public Agent {
 public:
  FixedAgent(std::string name, std::shared_ptr<const PosteriorModel> model,
             std::shared_ptr<const Strategy> strategy);

  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         Rng &rng) override;
  void learn(std::span<const Sample>, Rng &) override {}
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::shared_ptr<const PosteriorModel> model_;
  std::shared_ptr<const Strategy> strategy_;
};

class RandomAgent final : public Agent {
 public:
  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         Rng &rng) override;
  void learn(std::span<const Sample>, Rng &) override {}
  std::string name() const override { return "random"; }
};

}  // namespace dual
