#include "dual/model.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

namespace {

constexpr const char *kCheckpointMagic = "dual-checkpoint";
constexpr int kCheckpointVersion = 1;

void check_fit_config(const FitConfig &config) {
  if (config.batch_size == 0) throw ConfigError("fit: batch_size must be >= 1");
  if (!(config.learning_rate > 0)) throw ConfigError("fit: learning_rate must be > 0");
  if (config.lambda < 0) throw ConfigError("fit: lambda must be >= 0");
}

/// Runs shuffled mini-batch Adam. `step` evaluates the loss on a batch and
/// returns it with the flat gradient; `read`/`write` move the flat
/// parameter vector in and out of the model.
template <typename ReadFn, typename WriteFn, typename StepFn, typename FirstBatchFn>
FitReport run_adam(std::span<const Sample> data, const FitConfig &config, Rng &rng, ReadFn read,
                   WriteFn write, StepFn step, FirstBatchFn on_first_batch) {
  check_fit_config(config);
  FitReport report;
  if (config.epochs == 0) return report;
  if (data.empty()) throw ConfigError("fit: dataset is empty");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Vector flat = read();
  AdamState<double> adam(flat.size(), config.learning_rate);
  std::vector<Sample> batch;
  bool first = true;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      if (first) {
        on_first_batch(std::span<const Sample>(batch));
        flat = read();
        adam = AdamState<double>(flat.size(), config.learning_rate);
        first = false;
      }
      Vector grad;
      const double loss = step(std::span<const Sample>(batch), grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw NumericalError("fit: non-finite loss or gradient at step " +
                             std::to_string(report.steps));
      }
      flat = adam_step(flat, grad, adam);
      write(flat);
      epoch_total += loss;
      ++batches;
      ++report.steps;
      if (config.max_steps != 0 && report.steps >= config.max_steps) {
        report.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
        return report;
      }
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
  }
  return report;
}

}  // namespace

DualSnapshot::DualSnapshot(MappingParams mapping, VariationalState state, GpPrior prior)
    : mapping_(std::move(mapping)), state_(std::move(state)), prior_(prior) {
  cache_ = build_cache(state_, prior_);
}

PosteriorGaussian DualSnapshot::posterior(const SparseFeature &x) const {
  return cached_predict(forward(x, mapping_), cache_);
}

PosteriorGaussian LogitSnapshot::posterior(const SparseFeature &x) const {
  const Vector out = forward(x, mapping_);
  PosteriorGaussian post;
  post.mu = out[0];
  return post;
}

Vector flatten_params(const DualParams &params, bool include_kernel) {
  const auto &state = params.state;
  const Index mapping_size = params.mapping.num_parameters();
  const Index size = mapping_size + state.inducing().size() + 2 * state.size() +
                     (include_kernel ? 2 : 0);
  Vector flat(size);
  params.mapping.flatten_into(flat.head(mapping_size));
  Index offset = mapping_size;
  flat.segment(offset, state.inducing().size()) = state.inducing().reshaped();
  offset += state.inducing().size();
  flat.segment(offset, state.size()) = state.mean();
  offset += state.size();
  flat.segment(offset, state.size()) = state.log_var();
  offset += state.size();
  if (include_kernel) {
    flat[offset] = params.prior.kernel.log_amplitude;
    flat[offset + 1] = params.prior.kernel.log_lengthscale;
  }
  return flat;
}

void assign_params(DualParams &params, const Eigen::Ref<const Vector> &flat, bool include_kernel) {
  const Index mapping_size = params.mapping.num_parameters();
  const Index m = params.state.size();
  const Index d = params.state.dim();
  if (flat.size() != mapping_size + m * d + 2 * m + (include_kernel ? 2 : 0)) {
    throw ShapeError("assign_params: flat vector has wrong length");
  }
  params.mapping.assign_from(flat.head(mapping_size));
  Index offset = mapping_size;
  Matrix inducing = flat.segment(offset, m * d).reshaped(m, d);
  offset += m * d;
  Vector mean = flat.segment(offset, m);
  offset += m;
  Vector log_var = flat.segment(offset, m);
  offset += m;
  params.state.assign(std::move(inducing), std::move(mean), std::move(log_var));
  if (include_kernel) {
    params.prior.kernel.log_amplitude = flat[offset];
    params.prior.kernel.log_lengthscale = flat[offset + 1];
  }
}

Vector flatten_grads(const DualGrads &grads, bool include_kernel) {
  const Index mapping_size = grads.mapping.num_parameters();
  const Index m = grads.mean.size();
  Vector flat(mapping_size + grads.inducing.size() + 2 * m + (include_kernel ? 2 : 0));
  grads.mapping.flatten_into(flat.head(mapping_size));
  Index offset = mapping_size;
  flat.segment(offset, grads.inducing.size()) = grads.inducing.reshaped();
  offset += grads.inducing.size();
  flat.segment(offset, m) = grads.mean;
  offset += m;
  flat.segment(offset, m) = grads.log_var;
  offset += m;
  if (include_kernel) {
    flat[offset] = grads.log_amplitude;
    flat[offset + 1] = grads.log_lengthscale;
  }
  return flat;
}

DualModel::DualModel(const DualModelConfig &config, Rng &rng) {
  if (config.inducing < 1) throw ConfigError("DUAL model needs at least one inducing point");
  params_.mapping = MappingParams::initialize(config.arch, rng);
  params_.prior = config.prior;
  params_.state = VariationalState::initial(
      Matrix::Zero(config.inducing, static_cast<Index>(config.arch.output_dim)),
      config.prior.kernel);
}

DualModel::DualModel(DualParams params, bool initialized)
    : params_(std::move(params)), initialized_(initialized) {}

void DualModel::initialize_inducing(std::span<const Sample> batch, Rng &rng) {
  Matrix hidden(static_cast<Index>(batch.size()), params_.state.dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    hidden.row(static_cast<Index>(i)) = forward(batch[i].x, params_.mapping).transpose();
  }
  params_.state =
      VariationalState::initial(kmeans(hidden, params_.state.size(), rng), params_.prior.kernel);
  initialized_ = true;
}

FitReport DualModel::fit(std::span<const Sample> data, const FitConfig &config, Rng &rng) {
  const bool with_kernel = config.train_kernel;
  const double tau = config.tau < 0 ? 1.0 / static_cast<double>(std::max<std::size_t>(data.size(), 1))
                                    : config.tau;
  DualGrads grads;
  return run_adam(
      data, config, rng, [&] { return flatten_params(params_, with_kernel); },
      [&](const Vector &flat) { assign_params(params_, flat, with_kernel); },
      [&](std::span<const Sample> batch, Vector &grad) {
        const auto terms = total_loss(batch, params_, tau, config.lambda, &grads);
        grad = flatten_grads(grads, with_kernel);
        return terms.value;
      },
      [&](std::span<const Sample> batch) {
        if (!initialized_) initialize_inducing(batch, rng);
      });
}

std::shared_ptr<const DualSnapshot> DualModel::snapshot() const {
  return std::make_shared<const DualSnapshot>(params_.mapping, params_.state, params_.prior);
}

void DualModel::save(std::ostream &os) const {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "kind dual\n";
  io::write_count(os, "initialized", initialized_ ? 1 : 0);
  write_mapping(os, params_.mapping);
  write_state(os, params_.state, params_.prior);
  os << "end\n";
}

namespace {

std::string read_checkpoint_header(std::istream &is) {
  io::expect_token(is, kCheckpointMagic);
  const auto version = io::parse_int(io::read_token(is));
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  io::expect_token(is, "kind");
  return io::read_token(is);
}

DualModel read_dual_body(std::istream &is) {
  const bool initialized = io::read_count(is, "initialized") != 0;
  DualParams params;
  params.mapping = read_mapping(is);
  read_state(is, params.state, params.prior);
  io::expect_token(is, "end");
  if (params.state.dim() != params.mapping.output_dim()) {
    throw IoError("checkpoint: inducing dimension does not match mapping output");
  }
  return DualModel(std::move(params), initialized);
}

LogitModel read_logit_body(std::istream &is) {
  MappingParams params = read_mapping(is);
  io::expect_token(is, "end");
  return LogitModel(std::move(params));
}

}  // namespace

DualModel DualModel::load(std::istream &is) {
  const std::string kind = read_checkpoint_header(is);
  if (kind != "dual") throw IoError("checkpoint holds a '" + kind + "' model, expected dual");
  return read_dual_body(is);
}

LogitModel::LogitModel(MappingArch arch, Rng &rng) {
  arch.output_dim = 1;
  params_ = MappingParams::initialize(arch, rng);
}

LogitModel::LogitModel(MappingParams params) : params_(std::move(params)) {
  if (params_.output_dim() != 1) throw ShapeError("logit model needs a one-unit output");
}

double LogitModel::loss(std::span<const Sample> batch, MappingGrads *grads) const {
  if (batch.empty()) throw ShapeError("logit loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  MappingTape tape;
  Vector upstream(1);
  for (const auto &sample : batch) {
    const double f = forward(sample.x, params_, grads ? &tape : nullptr)[0];
    const double sign = sample.y > 0 ? 1.0 : -1.0;
    total -= log_sigmoid(sign * f) * inv_n;
    if (grads != nullptr) {
      upstream[0] = -sign * (1.0 - sigmoid(sign * f)) * inv_n;
      backward(tape, upstream, params_, *grads);
    }
  }
  return total;
}

FitReport LogitModel::fit(std::span<const Sample> data, const FitConfig &config, Rng &rng) {
  MappingGrads grads = MappingGrads::zeros_like(params_);
  return run_adam(
      data, config, rng,
      [&] {
        Vector flat(params_.num_parameters());
        params_.flatten_into(flat);
        return flat;
      },
      [&](const Vector &flat) { params_.assign_from(flat); },
      [&](std::span<const Sample> batch, Vector &grad) {
        grads.set_zero();
        const double value = loss(batch, &grads);
        grad.resize(grads.num_parameters());
        grads.flatten_into(grad);
        return value;
      },
      [](std::span<const Sample>) {});
}

std::shared_ptr<const LogitSnapshot> LogitModel::snapshot() const {
  return std::make_shared<const LogitSnapshot>(params_);
}

void LogitModel::save(std::ostream &os) const {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "kind logit\n";
  write_mapping(os, params_);
  os << "end\n";
}

LogitModel LogitModel::load(std::istream &is) {
  const std::string kind = read_checkpoint_header(is);
  if (kind != "logit") throw IoError("checkpoint holds a '" + kind + "' model, expected logit");
  return read_logit_body(is);
}

std::shared_ptr<const PosteriorModel> Checkpoint::snapshot() const {
  if (dual) return dual->snapshot();
  if (logit) return logit->snapshot();
  throw IoError("empty checkpoint");
}

Checkpoint load_checkpoint(std::istream &is) {
  Checkpoint checkpoint;
  checkpoint.kind = read_checkpoint_header(is);
  if (checkpoint.kind == "dual") {
    checkpoint.dual = std::make_unique<DualModel>(read_dual_body(is));
  } else if (checkpoint.kind == "logit") {
    checkpoint.logit = std::make_unique<LogitModel>(read_logit_body(is));
  } else {
    throw IoError("unknown checkpoint kind '" + checkpoint.kind + "'");
  }
  return checkpoint;
}

Checkpoint load_checkpoint_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace dual
