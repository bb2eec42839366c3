#include "dual/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

namespace {

constexpr std::size_t kColdStartHistory = 5;
constexpr double kColdStartBestCtr = 0.3;

}  // namespace

double CtrOracle::ctr(std::size_t user, std::size_t ad_index) const {
  if (is_table()) return table(static_cast<Index>(user), static_cast<Index>(ad_index));
  const auto u = static_cast<Index>(user);
  const auto a = static_cast<Index>(ad_index);
  return sigmoid(bias + ad_bias[a] + user_latent.row(u).dot(ad_latent.row(a)));
}

void EnvironmentSpec::validate() const {
  if (users.empty()) throw ConfigError(name + ": no users");
  if (ads.empty()) throw ConfigError(name + ": no ads");
  if (ad_field >= vocab_sizes.size()) throw ConfigError(name + ": ad field outside vocabulary list");
  double total_weight = 0;
  for (const auto &user : users) {
    if (!(user.weight >= 0)) throw ConfigError(name + ": negative user weight");
    total_weight += user.weight;
    for (const auto &group : user.features.groups) {
      if (group.field >= vocab_sizes.size() || group.field == ad_field) {
        throw ConfigError(name + ": user feature in field " + std::to_string(group.field));
      }
      for (auto index : group.indices) {
        if (index >= vocab_sizes[group.field]) throw ConfigError(name + ": user feature outside vocabulary");
      }
    }
  }
  if (!(total_weight > 0)) throw ConfigError(name + ": user weights sum to zero");
  for (std::size_t i = 0; i < ads.size(); ++i) {
    if (ads[i].id >= vocab_sizes[ad_field]) throw ConfigError(name + ": ad id outside vocabulary");
    if (!(ads[i].bid >= 0)) throw ConfigError(name + ": negative bid");
    for (std::size_t j = 0; j < i; ++j) {
      if (ads[j].id == ads[i].id) throw ConfigError(name + ": duplicate ad id");
    }
  }
  if (std::none_of(ads.begin(), ads.end(), [](const AdSpec &a) { return a.arrival == 0; })) {
    throw ConfigError(name + ": no ad is available at round 0");
  }
  if (oracle.is_table()) {
    if (oracle.table.rows() != static_cast<Index>(users.size()) ||
        oracle.table.cols() != static_cast<Index>(ads.size())) {
      throw ConfigError(name + ": CTR table must be users x ads");
    }
  } else if (oracle.user_latent.rows() != static_cast<Index>(users.size()) ||
             oracle.ad_latent.rows() != static_cast<Index>(ads.size()) ||
             oracle.ad_bias.size() != static_cast<Index>(ads.size()) ||
             oracle.user_latent.cols() != oracle.ad_latent.cols()) {
    throw ConfigError(name + ": logistic oracle shapes do not match users/ads");
  }
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (std::size_t a = 0; a < ads.size(); ++a) {
      const double p = oracle.ctr(u, a);
      if (!(p >= 0 && p <= 1)) throw ConfigError(name + ": true CTR outside [0, 1]");
    }
  }
  if (max_candidates < min_candidates) throw ConfigError(name + ": max_candidates < min_candidates");
  for (const auto &h : history) {
    if (h.user >= users.size()) throw ConfigError(name + ": history user out of range");
    ad_index(h.ad);
    if (h.click != 0 && h.click != 1) throw ConfigError(name + ": history click must be 0 or 1");
  }
}

std::size_t EnvironmentSpec::ad_index(std::size_t id) const {
  for (std::size_t i = 0; i < ads.size(); ++i) {
    if (ads[i].id == id) return i;
  }
  throw UnknownAd("ad " + std::to_string(id) + " is not in the catalog");
}

double EnvironmentSpec::true_ctr(std::size_t user, std::size_t ad_id) const {
  return oracle.ctr(user, ad_index(ad_id));
}

std::uint64_t EnvironmentSpec::hash() const {
  std::ostringstream os;
  os << name << '|' << ad_field << '|' << horizon << '|' << min_candidates << '|' << max_candidates << '|';
  for (auto v : vocab_sizes) os << v << ',';
  for (const auto &u : users) {
    os << "|u" << io::hex_double(u.weight);
    for (const auto &g : u.features.groups) {
      os << ' ' << g.field << ':';
      for (auto i : g.indices) os << i << ',';
    }
  }
  for (const auto &a : ads) os << "|a" << a.id << ':' << io::hex_double(a.bid) << ':' << a.arrival;
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (std::size_t a = 0; a < ads.size(); ++a) os << ' ' << io::hex_double(oracle.ctr(u, a));
  }
  for (const auto &h : history) os << "|h" << h.user << ':' << h.ad << ':' << h.click;
  return io::fnv1a(os.str());
}

Context sample_context(const EnvironmentSpec &spec, std::size_t round, Rng &rng) {
  Context context;
  context.round = round;
  if (spec.users.size() > 1) {
    std::vector<double> weights;
    weights.reserve(spec.users.size());
    for (const auto &u : spec.users) weights.push_back(u.weight);
    context.user = std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
  }
  context.features = spec.users[context.user].features;

  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < spec.ads.size(); ++i) {
    if (spec.ads[i].arrival <= round) live.push_back(i);
  }
  std::size_t size = live.size();
  if (spec.max_candidates > 0) {
    const std::size_t lo = std::max<std::size_t>(spec.min_candidates, 1);
    size = std::min(live.size(), lo + uniform_index(rng, spec.max_candidates - lo + 1));
  }
  if (size < live.size()) {
    // Partial Fisher-Yates: the first `size` slots are a uniform subset.
    for (std::size_t i = 0; i < size; ++i) std::swap(live[i], live[i + uniform_index(rng, live.size() - i)]);
    live.resize(size);
  }
  std::sort(live.begin(), live.end(), [&](std::size_t a, std::size_t b) { return spec.ads[a].id < spec.ads[b].id; });
  for (std::size_t i : live) {
    const auto &ad = spec.ads[i];
    context.candidates.push_back({ad.id, spec.ad_features(ad.id), ad.bid});
  }
  return context;
}

int feedback(const EnvironmentSpec &spec, std::size_t user, std::size_t ad_id, Rng &rng) {
  const double p = spec.true_ctr(user, ad_id);
  return uniform01(rng) < p ? 1 : 0;
}

std::vector<Sample> history_samples(const EnvironmentSpec &spec) {
  std::vector<Sample> out;
  for (const auto &h : spec.history) {
    out.push_back({concat(spec.users[h.user].features, spec.ad_features(h.ad)), h.click});
  }
  return out;
}

MappingArch mapping_arch(const EnvironmentSpec &spec, std::size_t embed_dim, std::vector<std::size_t> hidden,
                         std::size_t output_dim) {
  MappingArch arch;
  arch.vocab_sizes = spec.vocab_sizes;
  arch.embed_dim = embed_dim;
  arch.hidden = std::move(hidden);
  arch.output_dim = output_dim;
  return arch;
}

RunResult run_loop(const EnvironmentSpec &spec, Agent &agent, const RunConfig &config, Rng &rng) {
  spec.validate();
  if (config.update_every == 0) throw ConfigError("run: update_every must be >= 1");
  const std::size_t horizon = config.horizon ? config.horizon : spec.horizon;
  const std::size_t period = config.period ? config.period : config.update_every;
  Rng world = Rng(rng());
  Rng own = Rng(rng());

  RunResult result;
  std::vector<Sample> data = history_samples(spec);
  if (!data.empty()) agent.learn(data, own);
  result.trajectory.reserve(horizon);
  std::size_t period_clicks = 0;
  std::size_t period_rounds = 0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Context context = sample_context(spec, t, world);
    const RankingDecision decision = agent.decide(context.candidates, context.features, own);
    const int click = feedback(spec, context.user, decision.winner, world);

    ImpressionRecord record;
    record.round = t;
    record.user = context.user;
    record.winner = decision.winner;
    record.click = click;
    record.bid = spec.ads[spec.ad_index(decision.winner)].bid;
    record.true_ctr = spec.true_ctr(context.user, decision.winner);
    for (const auto &c : context.candidates) {
      record.candidates.push_back(c.id);
      record.best_ecpm = std::max(record.best_ecpm, spec.true_ctr(context.user, c.id) * c.bid);
    }
    result.welfare += click * record.bid;
    result.regret += record.best_ecpm - record.true_ctr * record.bid;
    result.cumulative_welfare.push_back(result.welfare);
    result.cumulative_regret.push_back(result.regret);
    result.impressions[decision.winner] += 1;
    result.trajectory.push_back(std::move(record));

    period_clicks += static_cast<std::size_t>(click);
    if (++period_rounds == period) {
      result.period_ctr.push_back(static_cast<double>(period_clicks) / static_cast<double>(period));
      period_clicks = period_rounds = 0;
    }

    data.push_back({concat(context.features, spec.ad_features(decision.winner)), click});
    if ((t + 1) % config.update_every == 0 && t + 1 < horizon) {
      agent.learn(data, own);
      ++result.updates;
    }
  }
  if (period_rounds > 0) {
    result.period_ctr.push_back(static_cast<double>(period_clicks) / static_cast<double>(period_rounds));
  }
  return result;
}

RankingDecision OracleAgent::decide(std::span<const AdCandidate> candidates, const SparseFeature &context,
                                    Rng &) {
  std::size_t user = spec_.users.size();
  for (std::size_t u = 0; u < spec_.users.size(); ++u) {
    if (spec_.users[u].features == context) {
      user = u;
      break;
    }
  }
  if (user == spec_.users.size()) throw ConfigError("oracle: context matches no user profile");
  RankingDecision decision;
  decision.strategy = "oracle";
  for (const auto &c : candidates) decision.scores.push_back(spec_.true_ctr(user, c.id) * c.bid);
  decision.winner = candidates[argmax_candidate(candidates, decision.scores)].id;
  return decision;
}

void write_trajectory(std::ostream &os, const RunResult &result, const EnvironmentSpec &spec,
                      std::uint64_t seed, const std::string &agent) {
  os << "#dual-trajectory 1 spec=" << io::hex_u64(spec.hash()) << " seed=" << seed << " agent=" << agent
     << '\n';
  os << "round\tuser\twinner\tclick\tbid\ttrue_ctr\tbest_ecpm\tcum_welfare\tcum_regret\tcandidates\n";
  for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
    const auto &r = result.trajectory[i];
    os << r.round << '\t' << r.user << '\t' << r.winner << '\t' << r.click << '\t' << io::format_double(r.bid)
       << '\t' << io::format_double(r.true_ctr) << '\t' << io::format_double(r.best_ecpm) << '\t'
       << io::format_double(result.cumulative_welfare[i]) << '\t'
       << io::format_double(result.cumulative_regret[i]) << '\t';
    for (std::size_t c = 0; c < r.candidates.size(); ++c) os << (c ? "," : "") << r.candidates[c];
    os << '\n';
  }
}

EnvironmentSpec fig2_scenario(std::vector<double> ctrs) {
  if (ctrs.size() != 3) throw ConfigError("fig2 scenario needs exactly three CTRs");
  EnvironmentSpec spec;
  spec.name = "fig2";
  spec.vocab_sizes = {1, 3};
  spec.ad_field = 1;
  spec.users = {{SparseFeature::one_hot(0, 0), 1.0}};
  spec.oracle.table = Matrix(1, 3);
  for (std::size_t a = 0; a < 3; ++a) {
    spec.ads.push_back({a, 1.0, 0});
    spec.oracle.table(0, static_cast<Index>(a)) = ctrs[a];
  }
  const auto best = static_cast<std::size_t>(std::max_element(ctrs.begin(), ctrs.end()) - ctrs.begin());
  spec.history = {{0, best, 0}};
  spec.horizon = 500;
  return spec;
}

EnvironmentSpec cold_start_scenario(std::size_t num_ads, std::size_t horizon, std::uint64_t seed) {
  if (num_ads < 3) throw ConfigError("cold-start scenario needs at least three ads");
  Rng rng = derive_rng(seed, 0xC01D);
  EnvironmentSpec spec;
  spec.name = "cold-start";
  spec.vocab_sizes = {1, num_ads};
  spec.ad_field = 1;
  spec.users = {{SparseFeature::one_hot(0, 0), 1.0}};
  spec.horizon = horizon;
  spec.oracle.table = Matrix(1, static_cast<Index>(num_ads));
  const std::size_t initial = std::max<std::size_t>(3, num_ads / 2);
  for (std::size_t a = 0; a < num_ads; ++a) {
    AdSpec ad{a, 1.0, 0};
    if (a >= initial) ad.arrival = 1 + uniform_index(rng, std::max<std::size_t>(horizon / 2, 1));
    const double u = uniform01(rng);
    spec.ads.push_back(ad);
    spec.oracle.table(0, static_cast<Index>(a)) = 0.02 + 0.25 * u * u;
  }
  // Ad 0 is the best ad and, as in the three-ad scenario, its only seeded
  // impression is a non-click. The other initial ads get representative
  // history: the expected click count, but at least one click.
  spec.oracle.table(0, 0) = kColdStartBestCtr;
  spec.history.push_back({0, 0, 0});
  for (std::size_t a = 1; a < initial; ++a) {
    const auto clicks = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(kColdStartHistory * spec.oracle.table(0, static_cast<Index>(a)))));
    for (std::size_t k = 0; k < kColdStartHistory; ++k) spec.history.push_back({0, a, k < clicks ? 1 : 0});
  }
  return spec;
}

EnvironmentSpec r6b_like_scenario(const R6bShape &shape, std::uint64_t seed) {
  if (shape.users == 0 || shape.ads == 0 || shape.user_fields == 0 || shape.field_vocab == 0) {
    throw ConfigError("r6b-like scenario: sizes must be positive");
  }
  Rng rng = derive_rng(seed, 0x126B);
  EnvironmentSpec spec;
  spec.name = "r6b-like";
  spec.vocab_sizes.assign(shape.user_fields, shape.field_vocab);
  spec.vocab_sizes.push_back(shape.ads);
  spec.ad_field = shape.user_fields;
  spec.horizon = shape.horizon;
  spec.min_candidates = shape.min_candidates;
  spec.max_candidates = shape.max_candidates;

  const auto k = static_cast<Index>(shape.latent_dim);
  // Latent user vectors are sums over per-index vectors, so the observable
  // features carry the CTR signal.
  std::vector<Matrix> index_latent(shape.user_fields, Matrix(static_cast<Index>(shape.field_vocab), k));
  for (auto &m : index_latent) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = shape.latent_scale * standard_normal(rng);
  }
  spec.oracle.user_latent = Matrix::Zero(static_cast<Index>(shape.users), k);
  for (std::size_t u = 0; u < shape.users; ++u) {
    UserProfile profile;
    for (std::size_t f = 0; f < shape.user_fields; ++f) {
      const std::size_t index = uniform_index(rng, shape.field_vocab);
      profile.features.groups.push_back({f, {index}});
      spec.oracle.user_latent.row(static_cast<Index>(u)) += index_latent[f].row(static_cast<Index>(index));
    }
    profile.weight = 0.5 + uniform01(rng);
    spec.users.push_back(std::move(profile));
  }
  spec.oracle.bias = shape.bias;
  spec.oracle.ad_bias = Vector(static_cast<Index>(shape.ads));
  spec.oracle.ad_latent = Matrix(static_cast<Index>(shape.ads), k);
  const std::size_t initial = std::max<std::size_t>(shape.max_candidates, shape.ads * 2 / 3);
  for (std::size_t a = 0; a < shape.ads; ++a) {
    AdSpec ad{a, 1.0, 0};
    if (a >= initial) ad.arrival = uniform_index(rng, std::max<std::size_t>(shape.horizon, 1));
    spec.ads.push_back(ad);
    spec.oracle.ad_bias[static_cast<Index>(a)] = 0.3 * standard_normal(rng);
    for (Index j = 0; j < k; ++j) {
      spec.oracle.ad_latent(static_cast<Index>(a), j) = shape.latent_scale * standard_normal(rng);
    }
  }
  return spec;
}

LogHeader synth_log_header(const EnvironmentSpec &spec, std::uint64_t seed) {
  return {spec.vocab_sizes, spec.ad_field, spec.hash(), seed};
}

std::vector<LogEntry> synth_r6b_log(const EnvironmentSpec &spec, std::size_t entries, Rng &rng) {
  spec.validate();
  std::vector<LogEntry> log;
  log.reserve(entries);
  for (std::size_t t = 0; t < entries; ++t) {
    const Context context = sample_context(spec, t, rng);
    LogEntry entry;
    entry.context = context.features;
    for (const auto &c : context.candidates) {
      entry.candidates.push_back(c.id);
      entry.bids.push_back(c.bid);
    }
    entry.displayed = entry.candidates[uniform_index(rng, entry.candidates.size())];
    entry.click = feedback(spec, context.user, entry.displayed, rng);
    log.push_back(std::move(entry));
  }
  return log;
}

void synth_r6b_generator(const EnvironmentSpec &spec, std::size_t entries, std::uint64_t seed,
                         std::ostream &os) {
  Rng rng = derive_rng(seed, 0x106);
  const auto log = synth_r6b_log(spec, entries, rng);
  write_log_header(os, synth_log_header(spec, seed));
  for (const auto &entry : log) write_log_entry(os, entry);
  if (!os) throw IoError("failed writing log");
}

SyntheticTask separable_task(std::size_t n_train, std::size_t n_test, Rng &rng, std::size_t vocab) {
  if (vocab < 2) throw ConfigError("separable task needs vocab >= 2");
  SyntheticTask task;
  task.vocab_sizes = {vocab, vocab};
  std::vector<double> w0(vocab), w1(vocab);
  for (auto &w : w0) w = standard_normal(rng);
  for (auto &w : w1) w = standard_normal(rng);
  const auto draw = [&](std::size_t n, std::vector<Sample> &out) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = uniform_index(rng, vocab);
      const std::size_t b = uniform_index(rng, vocab);
      SparseFeature x{{{0, {a}}, {1, {b}}}};
      out.push_back({std::move(x), w0[a] + w1[b] > 0 ? 1 : 0});
    }
  };
  draw(n_train, task.train);
  draw(n_test, task.test);
  return task;
}

}  // namespace dual
