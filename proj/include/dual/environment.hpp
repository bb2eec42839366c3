#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dual/log_format.hpp"
#include "dual/mapping.hpp"
#include "dual/random.hpp"
#include "dual/strategies.hpp"

namespace dual {

struct UserProfile {
  SparseFeature features;
  double weight = 1.0;
};

struct AdSpec {
  std::size_t id = 0;
  double bid = 1.0;
  /// First round in which the ad may appear in a candidate set.
  std::size_t arrival = 0;
};

/// Ground-truth CTR. Either an explicit users x ads table or a logistic
/// function sigmoid(bias + ad_bias[a] + <user_latent[u], ad_latent[a]>).
struct CtrOracle {
  Matrix table;
  double bias = 0;
  Vector ad_bias;
  Matrix user_latent;
  Matrix ad_latent;

  bool is_table() const { return table.size() > 0; }
  double ctr(std::size_t user, std::size_t ad_index) const;
};

struct SeedImpression {
  std::size_t user = 0;
  std::size_t ad = 0;
  int click = 0;
};

/// A synthetic bandit world. Ads are identified by id; their model
/// features are the one-hot of the id in field `ad_field`.
struct EnvironmentSpec {
  std::string name;
  std::vector<std::size_t> vocab_sizes;
  std::size_t ad_field = 0;
  std::vector<UserProfile> users;
  std::vector<AdSpec> ads;
  CtrOracle oracle;
  std::size_t horizon = 1000;
  /// Candidate-set size is uniform on [min, max], capped by the number of
  /// arrived ads. 0 means "every arrived ad".
  std::size_t min_candidates = 0;
  std::size_t max_candidates = 0;
  /// Impressions known before round 0, used for pretraining.
  std::vector<SeedImpression> history;

  void validate() const;
  std::size_t ad_index(std::size_t id) const;
  SparseFeature ad_features(std::size_t id) const { return SparseFeature::one_hot(ad_field, id); }
  double true_ctr(std::size_t user, std::size_t ad_id) const;
  /// Fingerprint of every field that influences a run.
  std::uint64_t hash() const;
};

struct Context {
  std::size_t round = 0;
  std::size_t user = 0;
  SparseFeature features;
  std::vector<AdCandidate> candidates;
};

Context sample_context(const EnvironmentSpec &spec, std::size_t round, Rng &rng);

/// Bernoulli click with the oracle CTR. Always consumes exactly one draw.
/// Throws UnknownAd.
int feedback(const EnvironmentSpec &spec, std::size_t user, std::size_t ad_id, Rng &rng);

std::vector<Sample> history_samples(const EnvironmentSpec &spec);

/// Mapping architecture whose vocabularies match the spec.
MappingArch mapping_arch(const EnvironmentSpec &spec, std::size_t embed_dim, std::vector<std::size_t> hidden,
                         std::size_t output_dim);

struct ImpressionRecord {
  std::size_t round = 0;
  std::size_t user = 0;
  std::vector<std::size_t> candidates;
  std::size_t winner = 0;
  int click = 0;
  double bid = 0;
  double true_ctr = 0;
  /// Best true eCPM among the candidates.
  double best_ecpm = 0;
};

struct RunConfig {
  /// Refit after every `update_every` rounds on everything collected.
  std::size_t update_every = 80;
  /// Rounds per CTR period; 0 means update_every.
  std::size_t period = 0;
  /// 0 means the spec's horizon.
  std::size_t horizon = 0;
};

struct RunResult {
  std::vector<ImpressionRecord> trajectory;
  double welfare = 0;
  double regret = 0;
  std::vector<double> cumulative_welfare;
  std::vector<double> cumulative_regret;
  std::vector<double> period_ctr;
  std::map<std::size_t, std::size_t> impressions;
  std::size_t updates = 0;
};

/// Decide, observe, and refit periodically. Traffic and clicks come from a
/// stream split off `rng` before the agent's stream, so agents run with the
/// same seed see the same users and the same click draws.
RunResult run_loop(const EnvironmentSpec &spec, Agent &agent, const RunConfig &config, Rng &rng);

/// Scores candidates by true eCPM; knows the user through the features.
class OracleAgent final : public Agent {
 public:
  explicit OracleAgent(const EnvironmentSpec &spec) : spec_(spec) {}
  RankingDecision decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                         Rng &rng) override;
  void learn(std::span<const Sample>, Rng &) override {}
  std::string name() const override { return "oracle"; }

 private:
  const EnvironmentSpec &spec_;
};

void write_trajectory(std::ostream &os, const RunResult &result, const EnvironmentSpec &spec,
                      std::uint64_t seed, const std::string &agent);

/// Three equal-bid ads under a single context, one pretraining impression:
/// a non-click on the best ad.
EnvironmentSpec fig2_scenario(std::vector<double> ctrs = {0.3, 0.5, 0.4});

/// Single context, `num_ads` equal-bid ads with skewed CTRs in [0.02, 0.27].
/// Half the ads are live from round 0; the rest arrive unseen during the
/// first half of the horizon. Ad 0 has CTR 0.3 and a single non-click in
/// the seeded history; the other initial ads get five impressions each
/// with their expected click count, but at least one click.
EnvironmentSpec cold_start_scenario(std::size_t num_ads = 10, std::size_t horizon = 5000,
                                    std::uint64_t seed = 7);

/// Many users described by multi-hot features, a large ad pool with
/// staggered arrivals, logistic CTRs and random candidate subsets.
struct R6bShape {
  std::size_t users = 200;
  std::size_t user_fields = 3;
  std::size_t field_vocab = 8;
  std::size_t ads = 60;
  std::size_t latent_dim = 3;
  std::size_t min_candidates = 30;
  std::size_t max_candidates = 46;
  std::size_t horizon = 20000;
  double bias = -2.5;
  double latent_scale = 0.8;
};
EnvironmentSpec r6b_like_scenario(const R6bShape &shape, std::uint64_t seed);

/// Uniform-random logging: displayed ad uniform over each candidate set.
LogHeader synth_log_header(const EnvironmentSpec &spec, std::uint64_t seed);
std::vector<LogEntry> synth_r6b_log(const EnvironmentSpec &spec, std::size_t entries, Rng &rng);
void synth_r6b_generator(const EnvironmentSpec &spec, std::size_t entries, std::uint64_t seed,
                         std::ostream &os);

/// Labelled data for the supervised sanity checks. Two fields; every index
/// carries a hidden weight and y = [w_i + w_j > 0].
struct SyntheticTask {
  std::vector<std::size_t> vocab_sizes;
  std::vector<Sample> train;
  std::vector<Sample> test;
};
SyntheticTask separable_task(std::size_t n_train, std::size_t n_test, Rng &rng, std::size_t vocab = 12);

}  // namespace dual
