// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances and budgets are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "dual/agents.hpp"
#include "dual/environment.hpp"
#include "dual/experiment.hpp"
#include "dual/metrics.hpp"
#include "dual/replay.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace dual {
namespace {

constexpr double kPosteriorTol = 1e-8;
constexpr double kCacheTol = 1e-10;
constexpr double kGradientTol = 1e-4;
constexpr double kKlZeroTol = 1e-10;
constexpr double kKlDenseTol = 1e-8;
constexpr int kMonteCarloSamples = 1000000;
constexpr double kAucThreshold = 0.9;
constexpr std::size_t kSeeds = 32;
constexpr double kMaxComplexityRatio = 6.0;
// Random states are redrawn above this condition number of K_uu.
constexpr double kMaxCondition = 1e3;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char *fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

int failures = 0;

void criterion(int id, const char *name, double budget_seconds, const std::function<Verdict()> &body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict verdict;
  try {
    verdict = body();
  } catch (const std::exception &e) {
    verdict = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = elapsed < budget_seconds;
  const bool pass = verdict.pass && in_time;
  if (!pass) ++failures;
  std::printf("[%s] %d %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id, name, verdict.detail.c_str(),
              elapsed, budget_seconds, in_time ? "" : " over budget");
  std::fflush(stdout);
}

GpPrior random_prior(Rng &rng) {
  GpPrior prior;
  prior.kernel = RbfParams::from(0.3 + uniform01(rng), 0.5 + 1.5 * uniform01(rng));
  prior.mean.constant = uniform01(rng) - 0.5;
  prior.jitter = 1e-6;
  return prior;
}

Verdict posterior_correctness() {
  Rng rng(101);
  const Index sizes[] = {1, 2, 4, 8};
  double worst_dense = 0, worst_cache = 0;
  int states = 0, rejected = 0;
  for (int trial = 0; trial < 128; ++trial, ++states) {
    const Index m = sizes[trial % 4];
    const Index d = 1 + static_cast<Index>(uniform_index(rng, 4));
    const GpPrior prior = random_prior(rng);
    const VariationalState state = fixture::conditioned_state(m, d, prior, rng, kMaxCondition, rejected);
    const InferenceCache cache = build_cache(state, prior);
    for (int q = 0; q < 5; ++q) {
      // Half the queries sit close to an inducing point.
      Vector h = oracle::random_matrix(d, 1, rng, 1.5);
      if (q % 2 == 0) h = state.inducing().row(uniform_index(rng, m)).transpose() + 0.1 * h;
      const PosteriorGaussian direct = predict(h, state, prior);
      const auto dense = fixture::dense_predict(h, state, prior);
      const PosteriorGaussian cached = cached_predict(h, cache, state, prior);
      worst_dense = std::max({worst_dense, std::abs(direct.mu - dense.mu), std::abs(direct.raw_sigma2 - dense.sigma2)});
      worst_cache =
          std::max({worst_cache, std::abs(cached.mu - direct.mu), std::abs(cached.raw_sigma2 - direct.raw_sigma2)});
    }
  }
  return {worst_dense <= kPosteriorTol && worst_cache <= kCacheTol,
          format("%d states, M in {1,2,4,8}, cond(K_uu) <= %.0e (%d redrawn); max |predict - dense| = %.2e (tol %.0e), "
                 "max |cached - predict| = %.2e (tol %.0e)",
                 states, kMaxCondition, rejected, worst_dense, kPosteriorTol, worst_cache, kCacheTol)};
}

Verdict gradient_suite() {
  Rng rng(202);
  double worst = 0;
  int rejected = 0;
  const int toys = 24;
  for (int t = 0; t < toys; ++t) {
    worst = std::max(worst, fixture::gradient_check_error(fixture::well_posed_toy(rng, rejected, 1e-2, kMaxCondition)));
  }
  return {worst <= kGradientTol,
          format("%d toys incl. kernel params (%d redrawn: assignment tie or cond(K_uu) > 1e3); max relative "
                 "error %.2e (tol %.0e)",
                 toys, rejected, worst, kGradientTol)};
}

Verdict kl_and_quadrature() {
  Rng rng(303);
  // q = p: inducing points far apart make K_uu diagonal, so S can equal it.
  double worst_zero = 0;
  for (Index m : {1, 2, 4, 8}) {
    const GpPrior prior = random_prior(rng);
    Matrix z = Matrix::Zero(m, 2);
    for (Index i = 0; i < m; ++i) z(i, 0) = 1000.0 * static_cast<double>(i);
    const Vector v = Vector::Constant(m, prior.mean.constant);
    const double variance = prior.kernel.prior_variance() + prior.jitter;
    const VariationalState state(z, v, Vector::Constant(m, std::log(variance)));
    worst_zero = std::max(worst_zero, std::abs(kl_q_p(state, prior)));
  }
  double worst_dense = 0;
  int rejected = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 1 + static_cast<Index>(uniform_index(rng, 8));
    const GpPrior prior = random_prior(rng);
    const VariationalState state = fixture::conditioned_state(m, 2, prior, rng, kMaxCondition, rejected);
    worst_dense = std::max(worst_dense, std::abs(kl_q_p(state, prior) - fixture::dense_kl(state, prior)));
  }
  int within = 0, cells = 0;
  double worst_se = 0;
  std::uint64_t seed = 1;
  for (double mu : {-3.0, 0.0, 3.0}) {
    for (double s2 : {0.01, 1.0, 9.0}) {
      for (int y : {0, 1}) {
        const auto mc = oracle::monte_carlo_log_lik(y, mu, s2, kMonteCarloSamples, seed++);
        const double gap = std::abs(expected_log_lik(y, mu, s2).value - mc.mean) / mc.standard_error;
        worst_se = std::max(worst_se, gap);
        within += gap <= 3.0 ? 1 : 0;
        ++cells;
      }
    }
  }
  return {worst_zero <= kKlZeroTol && worst_dense <= kKlDenseTol && within == cells,
          format("KL(q=p) max %.2e (tol %.0e); |KL - dense| max %.2e (tol %.0e, %d states redrawn); quadrature within 3 SE of 1e6-sample "
                 "MC in %d/%d cells (worst %.2f SE)",
                 worst_zero, kKlZeroTol, worst_dense, kKlDenseTol, rejected, within, cells, worst_se)};
}

struct SanityRun {
  double dual_auc = 0;
  double dual_extreme = 0;
  double logit_extreme = 0;
};

// Same data and streams as `dual train` with default settings.
SanityRun sanity_run(std::uint64_t seed) {
  const ExperimentConfig config = default_config("train");
  Rng data_rng = derive_rng(seed, 2);
  const SyntheticTask task = separable_task(config.train.n_train, config.train.n_test, data_rng, config.train.vocab);
  SanityRun run;
  {
    Rng init = derive_rng(seed, 1);
    Rng fit_rng = derive_rng(seed, 3);
    DualModel model(dual_config(config.model, task.vocab_sizes), init);
    model.fit(task.train, config.model.fit, fit_rng);
    const auto report = evaluate_predictions(*model.snapshot(), task.test);
    run.dual_auc = report.auc;
    run.dual_extreme = report.extreme_fraction;
  }
  {
    Rng init = derive_rng(seed, 1);
    Rng fit_rng = derive_rng(seed, 3);
    LogitModel model(dnn_arch(config.model, task.vocab_sizes), init);
    model.fit(task.train, config.model.fit, fit_rng);
    run.logit_extreme = evaluate_predictions(*model.snapshot(), task.test).extreme_fraction;
  }
  return run;
}

std::vector<SanityRun> sanity_runs;

Verdict training_sanity() {
  int good = 0;
  double worst = 1;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    sanity_runs.push_back(sanity_run(s));
    const double auc = sanity_runs.back().dual_auc;
    good += auc > kAucThreshold ? 1 : 0;
    worst = std::min(worst, auc);
  }
  return {good >= 30, format("500-sample separable task: AUC > %.1f in %d/%zu seeds (need >= 30), lowest %.3f",
                             kAucThreshold, good, kSeeds, worst)};
}

// A fixed contextual policy: greedy on a randomly initialized logit network.
std::shared_ptr<const PosteriorModel> fixed_policy(const EnvironmentSpec &spec, Rng &rng) {
  MappingArch arch = mapping_arch(spec, 4, {8}, 1);
  arch.embed_init = 1.0;
  return std::make_shared<const LogitSnapshot>(MappingParams::initialize(arch, rng));
}

Verdict replay_unbiasedness() {
  std::vector<double> diffs;
  int individually = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    R6bShape shape;
    shape.horizon = 20000;
    const EnvironmentSpec spec = r6b_like_scenario(shape, 5000 + s);
    Rng policy_rng = derive_rng(s, 7);
    FixedAgent agent("fixed", fixed_policy(spec, policy_rng), make_strategy({"greedy"}));

    Rng log_rng = derive_rng(s, 0x106);
    const auto log = synth_r6b_log(spec, 20000, log_rng);
    ReplayConfig replay_config;
    replay_config.pretrain_first = 0;
    Rng replay_rng = derive_rng(s, 8);
    const ReplayReport report = replay(log, synth_log_header(spec, s), agent, replay_config, replay_rng);

    RunConfig live_config;
    live_config.horizon = 20000;
    live_config.update_every = 20000;
    Rng live_rng = derive_rng(s, 9);
    const RunResult live = run_loop(spec, agent, live_config, live_rng);
    double clicks = 0;
    for (const auto &r : live.trajectory) clicks += r.click;
    const double live_ctr = clicks / 20000.0;

    diffs.push_back(report.ctr() - live_ctr);
    const double se = std::sqrt(live_ctr * (1 - live_ctr) / static_cast<double>(report.matched) +
                                live_ctr * (1 - live_ctr) / 20000.0);
    individually += std::abs(diffs.back()) <= 2 * se ? 1 : 0;
  }
  const SummaryStats stats = summarize(diffs);
  const double se = stats.stddev / std::sqrt(static_cast<double>(diffs.size()));
  return {std::abs(stats.mean) <= 2 * se,
          format("mean paired (replay - live) CTR over %zu seeds = %.4f, 2 SE = %.4f; %d/%zu seeds within their own 2 SE",
                 kSeeds, stats.mean, 2 * se, individually, kSeeds)};
}

Verdict exploration_benefit() {
  const ModelSettings model = bandit_model_settings();
  ModelSettings with_offset = model;
  with_offset.prior_mean = 1.0;
  const auto catalogue = standard_agents(1.0, 0.1);
  struct Entry {
    AgentSettings agent;
    const ModelSettings *model;
    std::vector<double> welfare;
  };
  std::vector<Entry> entries{{find_agent(catalogue, "dual-ts"), &model, {}},
                             {find_agent(catalogue, "dnn-greedy"), &model, {}},
                             {find_agent(catalogue, "dnn-eps-greedy"), &model, {}},
                             {find_agent(catalogue, "dual-greedy"), &with_offset, {}}};
  RunConfig config;
  config.update_every = 80;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const EnvironmentSpec spec = cold_start_scenario(10, 5000, 1000 + s);
    for (auto &e : entries) {
      Rng init = derive_rng(s, 1);
      auto agent = make_agent(e.agent, *e.model, spec.vocab_sizes, &spec, init);
      Rng rng = derive_rng(s, 0);
      e.welfare.push_back(run_loop(spec, *agent, config, rng).welfare);
    }
  }
  const auto mean = [](const std::vector<double> &v) { return summarize(v).mean; };
  const double ts = mean(entries[0].welfare), greedy = mean(entries[1].welfare), eps = mean(entries[2].welfare),
               offset = mean(entries[3].welfare);
  std::size_t wins = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) wins += entries[0].welfare[s] > entries[1].welfare[s] ? 1 : 0;
  const bool pass = ts > greedy && ts > eps && 4 * wins >= 3 * kSeeds && offset > greedy;
  return {pass, format("10 ads, 5000 rounds, refit every 80, %zu seeds; mean welfare DUAL-TS %.1f, DNN-Greedy %.1f, "
                       "DNN-eps-Greedy %.1f, DUAL-Greedy(C=1) %.1f; TS beats DNN-Greedy in %zu/%zu seeds (need >= 24)",
                       kSeeds, ts, greedy, eps, offset, wins, kSeeds)};
}

Verdict overconfidence() {
  if (sanity_runs.size() != kSeeds) return {false, "training-sanity runs missing"};
  int lower = 0;
  double dual = 0, logit = 0;
  for (const auto &run : sanity_runs) {
    lower += run.dual_extreme < run.logit_extreme ? 1 : 0;
    dual += run.dual_extreme / kSeeds;
    logit += run.logit_extreme / kSeeds;
  }
  return {lower >= 24, format("fraction in [0,0.01] or [0.99,1]: DUAL below logit model in %d/%zu seeds (need >= 24); "
                              "mean %.3f vs %.3f",
                              lower, kSeeds, dual, logit)};
}

double per_query_seconds(Index m, Index d) {
  Rng rng(808 + m);
  const VariationalState state = fixture::random_state(m, d, rng);
  GpPrior prior;
  prior.kernel = RbfParams::from(1.0, 1.0);
  prior.jitter = 1e-6;
  const InferenceCache cache = build_cache(state, prior);
  const int queries = 20000;
  const Matrix points = oracle::random_matrix(queries, d, rng);
  double best = 1e9, sink = 0;
  for (int rep = 0; rep < 7; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < queries; ++i) sink += cached_predict(points.row(i).transpose(), cache).sigma2;
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / queries);
  }
  if (sink == -1.0) std::puts("");
  return best;
}

Verdict complexity() {
  const Index d = 2;
  const double t64 = per_query_seconds(64, d);
  const double t256 = per_query_seconds(256, d);
  const double ratio = t256 / t64;
  return {ratio <= kMaxComplexityRatio,
          format("cached query at d'=%ld: M=64 %.2f us, M=256 %.2f us, ratio %.2f (limit %.0f; pure M^2 scaling gives "
                 "16, M^3 gives 64)",
                 static_cast<long>(d), t64 * 1e6, t256 * 1e6, ratio, kMaxComplexityRatio)};
}

}  // namespace
}  // namespace dual

int main(int argc, char **argv) {
  using namespace dual;
  // Optional list of criterion numbers to run, e.g. "acceptance 1 2 8".
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  if (wanted(1)) criterion(1, "posterior correctness", 10, posterior_correctness);
  if (wanted(2)) criterion(2, "gradient suite", 60, gradient_suite);
  if (wanted(3)) criterion(3, "KL and quadrature", 120, kl_and_quadrature);
  if (wanted(4)) criterion(4, "training sanity", 120, training_sanity);
  if (wanted(5)) criterion(5, "replay unbiasedness", 300, replay_unbiasedness);
  if (wanted(6)) criterion(6, "exploration benefit", 900, exploration_benefit);
  if (wanted(7)) criterion(7, "overconfidence diagnostic", 1, overconfidence);
  if (wanted(8)) criterion(8, "cached inference complexity", 60, complexity);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
