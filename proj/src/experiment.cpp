#include "dual/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <type_traits>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
struct is_vector : std::false_type {};
template <typename T>
struct is_vector<std::vector<T>> : std::true_type {};

template <typename T>
T convert(const json &value, const std::string &where) {
  if constexpr (is_vector<T>::value) {
    if (!value.is_array()) throw ConfigError(where + ": expected an array");
    T out;
    for (std::size_t i = 0; i < value.size(); ++i) {
      out.push_back(convert<typename T::value_type>(value[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!value.is_boolean()) throw ConfigError(where + ": expected true or false");
    return value.get<bool>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!value.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
    return value.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!value.is_number()) throw ConfigError(where + ": expected a number");
    return value.get<T>();
  } else {
    if (!value.is_string()) throw ConfigError(where + ": expected a string");
    return value.get<T>();
  }
}

// Reads the known keys of one object and rejects everything else.
class Section {
 public:
  Section(const json &value, std::string name) : value_(value), name_(std::move(name)) {
    if (!value_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  void get(const std::string &key, T &out) {
    known_.insert(key);
    const auto it = value_.find(key);
    if (it != value_.end()) out = convert<T>(*it, path(key));
  }

  const json *child(const std::string &key) {
    known_.insert(key);
    const auto it = value_.find(key);
    return it == value_.end() ? nullptr : &*it;
  }

  std::string path(const std::string &key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto &item : value_.items()) {
      if (!known_.count(item.key())) throw ConfigError("unknown config key '" + path(item.key()) + "'");
    }
  }

 private:
  std::string label() const { return name_.empty() ? "config" : name_; }

  const json &value_;
  std::string name_;
  std::set<std::string> known_;
};

std::vector<AgentSettings> agent_catalogue(const ExperimentConfig &config) {
  auto agents = standard_agents(config.kappa, config.epsilon);
  agents.push_back({"oracle", "oracle", {"greedy", config.kappa, 0.0}});
  return agents;
}

}  // namespace

const std::vector<std::string> &experiment_modes() {
  static const std::vector<std::string> modes{"train", "simulate", "replay", "generate-log", "diagnose"};
  return modes;
}

ExperimentConfig default_config(const std::string &mode) {
  ExperimentConfig config;
  config.mode = mode;
  if (mode == "train" || mode == "diagnose") config.model = ModelSettings{};
  return config;
}

void ExperimentConfig::validate() const {
  const auto &modes = experiment_modes();
  if (std::find(modes.begin(), modes.end(), mode) == modes.end()) throw ConfigError("unknown mode '" + mode + "'");
  if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicates");
  }
  if (out.empty()) throw ConfigError("out: empty output directory");

  if (model.inducing < 1) throw ConfigError("model.inducing (M) must be >= 1");
  if (!(model.amplitude > 0) || !(model.lengthscale > 0)) throw ConfigError("model.amplitude and lengthscale must be > 0");
  if (model.embed_dim < 1 || model.hidden_dim < 1) throw ConfigError("model.embed_dim and hidden_dim must be >= 1");
  if (!(model.embed_init >= 0)) throw ConfigError("model.embed_init must be >= 0");
  if (!(model.jitter > 0)) throw ConfigError("model.jitter must be > 0");
  if (model.fit.epochs < 1 || model.fit.batch_size < 1) throw ConfigError("model.epochs and batch_size must be >= 1");
  if (!(model.fit.learning_rate > 0)) throw ConfigError("model.learning_rate must be > 0");
  if (!(model.fit.lambda >= 0)) throw ConfigError("model.lambda must be >= 0");
  if (!(model.fit.tau >= 0) && model.fit.tau != -1.0) throw ConfigError("model.tau must be >= 0 or \"auto\"");
  if (!(kappa >= 0)) throw ConfigError("strategy.kappa must be >= 0");
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("strategy.epsilon must lie in [0, 1]");
  if (run.update_every < 1 || replay.update_every < 1) throw ConfigError("update_every must be >= 1");

  const auto catalogue = agent_catalogue(*this);
  if ((mode == "simulate" || mode == "replay") && agents.empty()) throw ConfigError("agents: empty list");
  for (const auto &name : agents) {
    const auto agent = find_agent(catalogue, name);
    if (mode == "replay" && agent.model == "oracle") throw ConfigError("the oracle agent cannot replay a log");
  }

  const auto &env = environment;
  if (env.scenario != "fig2" && env.scenario != "cold_start" && env.scenario != "r6b_like") {
    throw ConfigError("environment.scenario must be fig2, cold_start or r6b_like");
  }
  if (env.scenario == "fig2") {
    if (env.ctrs.size() != 3) throw ConfigError("environment.ctrs: fig2 needs three CTRs");
    for (double c : env.ctrs) {
      if (!(c >= 0 && c <= 1)) throw ConfigError("environment.ctrs must lie in [0, 1]");
    }
  }
  if (env.scenario == "cold_start" && env.num_ads < 2) throw ConfigError("environment.num_ads must be >= 2");
  if (env.scenario == "r6b_like") {
    const auto &s = env.r6b;
    if (s.users < 1 || s.ads < 1 || s.user_fields < 1 || s.field_vocab < 1 || s.latent_dim < 1) {
      throw ConfigError("environment.r6b: sizes must be >= 1");
    }
    if (s.min_candidates > s.max_candidates) throw ConfigError("environment.r6b: min_candidates > max_candidates");
  }

  if (log.format != "dual" && log.format != "r6b") throw ConfigError("log.format must be dual or r6b");
  if (log.format == "r6b" && log.path.empty()) throw ConfigError("log.format r6b needs log.path");
  if (log.path.empty() && (mode == "replay" || mode == "generate-log") && log.entries < 1) {
    throw ConfigError("log.entries must be >= 1");
  }

  if (mode == "train") {
    if (train.models.empty()) throw ConfigError("train.models: empty list");
    for (const auto &m : train.models) {
      if (m != "dual" && m != "dnn") throw ConfigError("train.models: unknown model '" + m + "'");
    }
    if (train.n_train < 1 || train.n_test < 1) throw ConfigError("train.n_train and n_test must be >= 1");
    if (train.vocab < 2) throw ConfigError("train.vocab must be >= 2");
  }
  if (mode == "diagnose") {
    if (diagnose.checkpoint.empty()) throw ConfigError("diagnose.checkpoint is required");
    if (diagnose.bins < 1) throw ConfigError("diagnose.bins must be >= 1");
    if (log.path.empty() && (train.n_test < 1 || train.vocab < 2)) throw ConfigError("diagnose: empty eval set");
  }
}

nlohmann::json to_json(const ExperimentConfig &config) {
  const auto &m = config.model;
  const auto &e = config.environment;
  json tau = m.fit.tau < 0 ? json("auto") : json(m.fit.tau);
  return json{
      {"mode", config.mode},
      {"seeds", config.seeds},
      {"out", config.out},
      {"environment",
       {{"scenario", e.scenario},
        {"ctrs", e.ctrs},
        {"num_ads", e.num_ads},
        {"horizon", e.horizon},
        {"scenario_seed", e.scenario_seed},
        {"r6b",
         {{"users", e.r6b.users},
          {"user_fields", e.r6b.user_fields},
          {"field_vocab", e.r6b.field_vocab},
          {"ads", e.r6b.ads},
          {"latent_dim", e.r6b.latent_dim},
          {"min_candidates", e.r6b.min_candidates},
          {"max_candidates", e.r6b.max_candidates},
          {"horizon", e.r6b.horizon},
          {"bias", e.r6b.bias},
          {"latent_scale", e.r6b.latent_scale}}}}},
      {"log", {{"path", config.log.path}, {"format", config.log.format}, {"entries", config.log.entries}}},
      {"model",
       {{"embed_dim", m.embed_dim},
        {"embed_init", m.embed_init},
        {"hidden", m.hidden},
        {"hidden_dim", m.hidden_dim},
        {"inducing", m.inducing},
        {"amplitude", m.amplitude},
        {"lengthscale", m.lengthscale},
        {"prior_mean", m.prior_mean},
        {"jitter", m.jitter},
        {"dnn_hidden", m.dnn_hidden},
        {"epochs", m.fit.epochs},
        {"batch_size", m.fit.batch_size},
        {"learning_rate", m.fit.learning_rate},
        {"tau", tau},
        {"lambda", m.fit.lambda},
        {"train_kernel", m.fit.train_kernel},
        {"max_steps", m.fit.max_steps}}},
      {"strategy", {{"kappa", config.kappa}, {"epsilon", config.epsilon}}},
      {"agents", config.agents},
      {"run", {{"update_every", config.run.update_every}, {"period", config.run.period}}},
      {"replay",
       {{"update_every", config.replay.update_every},
        {"pretrain_first", config.replay.pretrain_first},
        {"period", config.replay.period}}},
      {"train",
       {{"n_train", config.train.n_train},
        {"n_test", config.train.n_test},
        {"vocab", config.train.vocab},
        {"models", config.train.models}}},
      {"diagnose", {{"checkpoint", config.diagnose.checkpoint}, {"bins", config.diagnose.bins}}},
  };
}

ExperimentConfig config_from_json(const nlohmann::json &value, ExperimentConfig config) {
  Section root(value, "");
  root.get("mode", config.mode);
  root.get("seeds", config.seeds);
  root.get("out", config.out);
  root.get("agents", config.agents);
  if (const json *j = root.child("environment")) {
    Section s(*j, "environment");
    auto &e = config.environment;
    s.get("scenario", e.scenario);
    s.get("ctrs", e.ctrs);
    s.get("num_ads", e.num_ads);
    s.get("horizon", e.horizon);
    s.get("scenario_seed", e.scenario_seed);
    if (const json *r = s.child("r6b")) {
      Section rs(*r, "environment.r6b");
      rs.get("users", e.r6b.users);
      rs.get("user_fields", e.r6b.user_fields);
      rs.get("field_vocab", e.r6b.field_vocab);
      rs.get("ads", e.r6b.ads);
      rs.get("latent_dim", e.r6b.latent_dim);
      rs.get("min_candidates", e.r6b.min_candidates);
      rs.get("max_candidates", e.r6b.max_candidates);
      rs.get("horizon", e.r6b.horizon);
      rs.get("bias", e.r6b.bias);
      rs.get("latent_scale", e.r6b.latent_scale);
      rs.finish();
    }
    s.finish();
  }
  if (const json *j = root.child("log")) {
    Section s(*j, "log");
    s.get("path", config.log.path);
    s.get("format", config.log.format);
    s.get("entries", config.log.entries);
    s.finish();
  }
  if (const json *j = root.child("model")) {
    Section s(*j, "model");
    auto &m = config.model;
    s.get("embed_dim", m.embed_dim);
    s.get("embed_init", m.embed_init);
    s.get("hidden", m.hidden);
    s.get("hidden_dim", m.hidden_dim);
    s.get("inducing", m.inducing);
    s.get("amplitude", m.amplitude);
    s.get("lengthscale", m.lengthscale);
    s.get("prior_mean", m.prior_mean);
    s.get("jitter", m.jitter);
    s.get("dnn_hidden", m.dnn_hidden);
    s.get("epochs", m.fit.epochs);
    s.get("batch_size", m.fit.batch_size);
    s.get("learning_rate", m.fit.learning_rate);
    if (const json *tau = s.child("tau")) {
      if (tau->is_string() && tau->get<std::string>() == "auto") {
        m.fit.tau = -1.0;
      } else {
        m.fit.tau = convert<double>(*tau, "model.tau");
        if (!(m.fit.tau >= 0)) throw ConfigError("model.tau must be >= 0 or \"auto\"");
      }
    }
    s.get("lambda", m.fit.lambda);
    s.get("train_kernel", m.fit.train_kernel);
    s.get("max_steps", m.fit.max_steps);
    s.finish();
  }
  if (const json *j = root.child("strategy")) {
    Section s(*j, "strategy");
    s.get("kappa", config.kappa);
    s.get("epsilon", config.epsilon);
    s.finish();
  }
  if (const json *j = root.child("run")) {
    Section s(*j, "run");
    s.get("update_every", config.run.update_every);
    s.get("period", config.run.period);
    s.finish();
  }
  if (const json *j = root.child("replay")) {
    Section s(*j, "replay");
    s.get("update_every", config.replay.update_every);
    s.get("pretrain_first", config.replay.pretrain_first);
    s.get("period", config.replay.period);
    s.finish();
  }
  if (const json *j = root.child("train")) {
    Section s(*j, "train");
    s.get("n_train", config.train.n_train);
    s.get("n_test", config.train.n_test);
    s.get("vocab", config.train.vocab);
    s.get("models", config.train.models);
    s.finish();
  }
  if (const json *j = root.child("diagnose")) {
    Section s(*j, "diagnose");
    s.get("checkpoint", config.diagnose.checkpoint);
    s.get("bins", config.diagnose.bins);
    s.finish();
  }
  root.finish();
  return config;
}

ExperimentConfig load_config_file(const std::string &path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json value;
  try {
    value = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(value, std::move(base));
}

EnvironmentSpec build_environment(const EnvironmentConfig &config, std::uint64_t seed) {
  const std::uint64_t world = config.scenario_seed + seed;
  EnvironmentSpec spec;
  if (config.scenario == "fig2") {
    spec = fig2_scenario(config.ctrs);
  } else if (config.scenario == "cold_start") {
    spec = cold_start_scenario(config.num_ads, config.horizon ? config.horizon : 5000, world);
  } else if (config.scenario == "r6b_like") {
    R6bShape shape = config.r6b;
    if (config.horizon) shape.horizon = config.horizon;
    spec = r6b_like_scenario(shape, world);
  } else {
    throw ConfigError("unknown scenario '" + config.scenario + "'");
  }
  if (config.horizon) spec.horizon = config.horizon;
  spec.validate();
  return spec;
}

PredictionReport evaluate_predictions(const PosteriorModel &model, std::span<const Sample> data) {
  if (data.empty()) throw ConfigError("evaluation set is empty");
  PredictionReport report;
  report.samples = data.size();
  std::vector<int> labels;
  double variance = 0;
  for (const auto &sample : data) {
    const PosteriorGaussian post = model.posterior(sample.x);
    report.probabilities.push_back(predictive_probability(post.mu, post.sigma2));
    labels.push_back(sample.y);
    variance += post.sigma2;
  }
  report.auc = auc(report.probabilities, labels);
  report.log_loss = log_loss(report.probabilities, labels);
  report.mean_variance = variance / static_cast<double>(data.size());
  report.extreme_fraction = extreme_fraction(report.probabilities, 0.01);
  return report;
}

void write_summary(std::ostream &os, std::span<const SummaryRow> rows) {
  os << "group\tmetric\tseeds\tmean\tstd\tmedian\n";
  for (const auto &row : rows) {
    os << row.group << '\t' << row.metric << '\t' << row.stats.count << '\t' << io::format_double(row.stats.mean)
       << '\t' << io::format_double(row.stats.stddev) << '\t' << io::format_double(row.stats.median) << '\n';
  }
}

namespace {

struct Metric {
  std::string group;
  std::string metric;
  double value = 0;
};

std::ofstream open_out(const fs::path &path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void close_out(std::ofstream &out, const fs::path &path) {
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string replace_seed(std::string pattern, std::uint64_t seed) {
  const std::string token = "{seed}";
  for (auto pos = pattern.find(token); pos != std::string::npos; pos = pattern.find(token, pos)) {
    pattern.replace(pos, token.size(), std::to_string(seed));
  }
  return pattern;
}

// Shared read-only inputs for all seeds.
struct Inputs {
  const ExperimentConfig &config;
  std::vector<AgentSettings> catalogue;
  const LoadedLog *log = nullptr;
};

std::vector<Metric> simulate_seed(const Inputs &in, std::uint64_t seed, const fs::path &dir) {
  const auto &config = in.config;
  const EnvironmentSpec spec = build_environment(config.environment, seed);
  std::vector<Metric> metrics;
  const fs::path series_path = dir / "period_ctr.tsv";
  auto series = open_out(series_path);
  series << "agent\tperiod\tctr\n";
  for (const auto &name : config.agents) {
    Rng init = derive_rng(seed, 1);
    auto agent = make_agent(find_agent(in.catalogue, name), config.model, spec.vocab_sizes, &spec, init);
    Rng rng = derive_rng(seed, 0);
    const RunResult result = run_loop(spec, *agent, config.run, rng);

    const fs::path trajectory_path = dir / ("trajectory-" + name + ".tsv");
    auto trajectory = open_out(trajectory_path);
    write_trajectory(trajectory, result, spec, seed, name);
    close_out(trajectory, trajectory_path);
    for (std::size_t p = 0; p < result.period_ctr.size(); ++p) {
      series << name << '\t' << p << '\t' << io::format_double(result.period_ctr[p]) << '\n';
    }
    double clicks = 0;
    for (const auto &r : result.trajectory) clicks += r.click;
    metrics.push_back({name, "welfare", result.welfare});
    metrics.push_back({name, "regret", result.regret});
    metrics.push_back({name, "ctr", clicks / static_cast<double>(result.trajectory.size())});
    metrics.push_back({name, "updates", static_cast<double>(result.updates)});
  }
  close_out(series, series_path);
  return metrics;
}

struct SeedLog {
  LogHeader header;
  std::vector<LogEntry> entries;
  std::unique_ptr<EnvironmentSpec> spec;
};

SeedLog seed_log(const Inputs &in, std::uint64_t seed) {
  SeedLog out;
  if (in.log != nullptr) {
    out.header = in.log->header;
    out.entries = in.log->entries;
    return out;
  }
  out.spec = std::make_unique<EnvironmentSpec>(build_environment(in.config.environment, seed));
  Rng rng = derive_rng(seed, 0x106);
  out.entries = synth_r6b_log(*out.spec, in.config.log.entries, rng);
  out.header = synth_log_header(*out.spec, seed);
  return out;
}

std::vector<Metric> replay_seed(const Inputs &in, std::uint64_t seed, const fs::path &dir) {
  const auto &config = in.config;
  const SeedLog log = seed_log(in, seed);
  std::vector<Metric> metrics;
  const fs::path series_path = dir / "period_ctr.tsv";
  auto series = open_out(series_path);
  series << "agent\tperiod\tmatched\tctr\n";
  for (const auto &name : config.agents) {
    Rng init = derive_rng(seed, 1);
    auto agent = make_agent(find_agent(in.catalogue, name), config.model, log.header.vocab_sizes, log.spec.get(),
                            init);
    Rng rng = derive_rng(seed, 0);
    const ReplayReport report = replay(log.entries, log.header, *agent, config.replay, rng);
    for (std::size_t p = 0; p < report.period_ctr.size(); ++p) {
      series << name << '\t' << p << '\t' << report.period_matched[p] << '\t'
             << io::format_double(report.period_ctr[p]) << '\n';
    }
    metrics.push_back({name, "ctr", report.ctr()});
    metrics.push_back({name, "matched", static_cast<double>(report.matched)});
    metrics.push_back({name, "clicks", static_cast<double>(report.clicks)});
    metrics.push_back({name, "welfare", report.welfare});
    metrics.push_back({name, "updates", static_cast<double>(report.updates)});
  }
  close_out(series, series_path);
  return metrics;
}

std::vector<Metric> generate_log_seed(const Inputs &in, std::uint64_t seed, const fs::path &dir) {
  const SeedLog log = seed_log(in, seed);
  const fs::path path = dir / "log.tsv";
  auto out = open_out(path);
  write_log_header(out, log.header);
  double clicks = 0, candidates = 0;
  for (const auto &entry : log.entries) {
    write_log_entry(out, entry);
    clicks += entry.click;
    candidates += static_cast<double>(entry.candidates.size());
  }
  close_out(out, path);
  const double n = static_cast<double>(log.entries.size());
  return {{"log", "entries", n}, {"log", "ctr", clicks / n}, {"log", "mean_candidates", candidates / n}};
}

SyntheticTask seed_task(const ExperimentConfig &config, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 2);
  return separable_task(config.train.n_train, config.train.n_test, rng, config.train.vocab);
}

void push_report(std::vector<Metric> &metrics, const std::string &group, const PredictionReport &report) {
  metrics.push_back({group, "auc", report.auc});
  metrics.push_back({group, "log_loss", report.log_loss});
  metrics.push_back({group, "mean_variance", report.mean_variance});
  metrics.push_back({group, "extreme_fraction", report.extreme_fraction});
}

std::vector<Metric> train_seed(const Inputs &in, std::uint64_t seed, const fs::path &dir) {
  const auto &config = in.config;
  const SyntheticTask task = seed_task(config, seed);
  std::vector<Metric> metrics;
  for (const auto &kind : config.train.models) {
    Rng init = derive_rng(seed, 1);
    Rng fit_rng = derive_rng(seed, 3);
    FitReport fit;
    std::shared_ptr<const PosteriorModel> snapshot;
    const fs::path checkpoint_path = dir / (kind + ".ckpt");
    auto checkpoint = open_out(checkpoint_path);
    if (kind == "dual") {
      DualModel model(dual_config(config.model, task.vocab_sizes), init);
      fit = model.fit(task.train, config.model.fit, fit_rng);
      model.save(checkpoint);
      snapshot = model.snapshot();
    } else {
      LogitModel model(dnn_arch(config.model, task.vocab_sizes), init);
      fit = model.fit(task.train, config.model.fit, fit_rng);
      model.save(checkpoint);
      snapshot = model.snapshot();
    }
    close_out(checkpoint, checkpoint_path);

    const fs::path loss_path = dir / ("loss-" + kind + ".tsv");
    auto loss = open_out(loss_path);
    loss << "epoch\tloss\n";
    for (std::size_t e = 0; e < fit.epoch_loss.size(); ++e) {
      loss << e << '\t' << io::format_double(fit.epoch_loss[e]) << '\n';
    }
    close_out(loss, loss_path);

    push_report(metrics, kind, evaluate_predictions(*snapshot, task.test));
    metrics.push_back({kind, "steps", static_cast<double>(fit.steps)});
  }
  return metrics;
}

json histogram_json(const Histogram &h) {
  return json{{"lower", h.lower}, {"upper", h.upper}, {"counts", h.counts}};
}

std::vector<Metric> diagnose_seed(const Inputs &in, std::uint64_t seed, const fs::path &dir) {
  const auto &config = in.config;
  const std::string path = replace_seed(config.diagnose.checkpoint, seed);
  const Checkpoint checkpoint = load_checkpoint_file(path);
  std::vector<Sample> eval;
  if (in.log != nullptr) {
    for (const auto &entry : in.log->entries) eval.push_back(displayed_sample(entry, in.log->header));
  } else {
    eval = seed_task(config, seed).test;
  }
  const PredictionReport report = evaluate_predictions(*checkpoint.snapshot(), eval);
  const std::size_t bins = config.diagnose.bins;
  const json doc{
      {"checkpoint", path},
      {"kind", checkpoint.kind},
      {"seed", seed},
      {"samples", report.samples},
      {"auc", report.auc},
      {"log_loss", report.log_loss},
      {"mean_variance", report.mean_variance},
      {"extreme_fraction", report.extreme_fraction},
      {"histograms",
       {{"low", histogram_json(histogram(report.probabilities, 0.0, 0.1, bins))},
        {"high", histogram_json(histogram(report.probabilities, 0.9, 1.0, bins))},
        {"full", histogram_json(histogram(report.probabilities, 0.0, 1.0, bins))}}},
  };
  const fs::path out_path = dir / "diagnose.json";
  auto out = open_out(out_path);
  out << doc.dump(2) << '\n';
  close_out(out, out_path);
  std::vector<Metric> metrics;
  push_report(metrics, checkpoint.kind, report);
  return metrics;
}

}  // namespace

std::vector<SummaryRow> run_experiment(const ExperimentConfig &config, std::ostream &log, std::size_t jobs) {
  config.validate();
  Inputs inputs{config, agent_catalogue(config), nullptr};
  LoadedLog loaded;
  if (!config.log.path.empty() && config.mode != "simulate" && config.mode != "train") {
    if (config.log.format == "r6b") {
      std::ifstream in(config.log.path);
      if (!in) throw IoError("cannot open log '" + config.log.path + "'");
      loaded = read_r6b(in);
    } else {
      loaded = read_log_file(config.log.path);
    }
    if (loaded.entries.empty()) throw IoError("log '" + config.log.path + "' has no entries");
    inputs.log = &loaded;
  }

  const fs::path root(config.out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());
  {
    const fs::path path = root / "config.json";
    auto out = open_out(path);
    out << to_json(config).dump(2) << '\n';
    close_out(out, path);
  }

  using SeedFn = std::vector<Metric> (*)(const Inputs &, std::uint64_t, const fs::path &);
  const std::map<std::string, SeedFn> handlers{{"simulate", simulate_seed},
                                               {"replay", replay_seed},
                                               {"generate-log", generate_log_seed},
                                               {"train", train_seed},
                                               {"diagnose", diagnose_seed}};
  const SeedFn handler = handlers.at(config.mode);

  std::vector<std::vector<Metric>> per_seed(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      try {
        const fs::path dir = root / ("seed-" + std::to_string(seed));
        fs::create_directories(dir);
        per_seed[i] = handler(inputs, seed, dir);
        const fs::path path = dir / "metrics.tsv";
        auto out = open_out(path);
        out << "group\tmetric\tvalue\n";
        for (const auto &m : per_seed[i]) out << m.group << '\t' << m.metric << '\t' << io::format_double(m.value) << '\n';
        close_out(out, path);
        std::lock_guard lock(log_mutex);
        log << config.mode << ": seed " << seed << " done\n";
      } catch (const fs::filesystem_error &e) {
        errors[i] = std::make_exception_ptr(IoError(e.what()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, config.seeds.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  for (const auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Rows keep the order of first appearance; values are in seed order.
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> values;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto &metrics : per_seed) {
    for (const auto &m : metrics) {
      const auto [it, inserted] = slot.emplace(std::make_pair(m.group, m.metric), rows.size());
      if (inserted) {
        rows.push_back({m.group, m.metric, {}});
        values.emplace_back();
      }
      values[it->second].push_back(m.value);
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r].stats = summarize(values[r]);
  const fs::path path = root / "summary.tsv";
  auto out = open_out(path);
  write_summary(out, rows);
  close_out(out, path);
  return rows;
}

}  // namespace dual
