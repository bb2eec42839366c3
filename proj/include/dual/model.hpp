#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dual/mapping.hpp"
#include "dual/svgp.hpp"

namespace dual {

/// Mini-batch Adam schedule shared by the DUAL model and the plain logit
/// baseline.
struct FitConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  /// Temperature on the KL term; negative means 1 / dataset size.
  double tau = -1.0;
  /// Weight of the clustering regularizer.
  double lambda = 0.1;
  bool train_kernel = false;
  /// Upper bound on optimizer steps per fit call; 0 means no bound.
  std::size_t max_steps = 0;
};

struct FitReport {
  std::size_t steps = 0;
  std::vector<double> epoch_loss;
};

/// Anything that yields a Gaussian belief over the logit of a feature vector.
class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual PosteriorGaussian posterior(const SparseFeature &x) const = 0;
};

/// Frozen DUAL parameters plus their inference cache. Immutable, so safe to
/// share between concurrent readers.
class DualSnapshot final : public PosteriorModel {
 public:
  DualSnapshot(MappingParams mapping, VariationalState state, GpPrior prior);

  PosteriorGaussian posterior(const SparseFeature &x) const override;
  const MappingParams &mapping() const { return mapping_; }
  const VariationalState &state() const { return state_; }
  const GpPrior &prior() const { return prior_; }
  const InferenceCache &cache() const { return cache_; }

 private:
  MappingParams mapping_;
  VariationalState state_;
  GpPrior prior_;
  InferenceCache cache_;
};

/// Point-estimate model: the mapping's single output is the logit and the
/// variance is zero.
class LogitSnapshot final : public PosteriorModel {
 public:
  explicit LogitSnapshot(MappingParams mapping) : mapping_(std::move(mapping)) {}

  PosteriorGaussian posterior(const SparseFeature &x) const override;
  const MappingParams &mapping() const { return mapping_; }

 private:
  MappingParams mapping_;
};

struct DualModelConfig {
  MappingArch arch;
  Index inducing = 8;
  GpPrior prior;
};

/// Flat views used by the optimizer and the gradient checks. Layout:
/// mapping, Z' (column-major), v, s_log, then log a and log l when the
/// kernel is trainable.
Vector flatten_params(const DualParams &params, bool include_kernel);
void assign_params(DualParams &params, const Eigen::Ref<const Vector> &flat, bool include_kernel);
Vector flatten_grads(const DualGrads &grads, bool include_kernel);

class DualModel {
 public:
  DualModel(const DualModelConfig &config, Rng &rng);
  DualModel(DualParams params, bool initialized);

  const DualParams &params() const { return params_; }
  DualParams &mutable_params() { return params_; }
  /// False until the first fit placed the inducing points.
  bool initialized() const { return initialized_; }

  /// Shuffled mini-batch Adam on total_loss. The first call initializes Z'
  /// by k-means on the hidden points of the first batch. Continues from the
  /// current parameters otherwise.
  FitReport fit(std::span<const Sample> data, const FitConfig &config, Rng &rng);

  std::shared_ptr<const DualSnapshot> snapshot() const;

  void save(std::ostream &os) const;
  static DualModel load(std::istream &is);

 private:
  void initialize_inducing(std::span<const Sample> batch, Rng &rng);

  DualParams params_;
  bool initialized_ = false;
};

/// Supervised baseline: mapping with a one-unit linear output trained on
/// the Bernoulli log-loss.
class LogitModel {
 public:
  LogitModel(MappingArch arch, Rng &rng);
  explicit LogitModel(MappingParams params);

  const MappingParams &params() const { return params_; }
  MappingParams &mutable_params() { return params_; }

  /// Mean log-loss over `batch`; accumulates gradients when given.
  double loss(std::span<const Sample> batch, MappingGrads *grads = nullptr) const;
  FitReport fit(std::span<const Sample> data, const FitConfig &config, Rng &rng);

  std::shared_ptr<const LogitSnapshot> snapshot() const;

  void save(std::ostream &os) const;
  static LogitModel load(std::istream &is);

 private:
  MappingParams params_;
};

/// A model that can be refit on collected data and frozen into a snapshot.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual void fit(std::span<const Sample> data, Rng &rng) = 0;
  virtual std::shared_ptr<const PosteriorModel> snapshot() const = 0;
};

class DualLearner final : public Learner {
 public:
  DualLearner(const DualModelConfig &config, FitConfig fit, Rng &rng)
      : model_(config, rng), fit_(fit) {}

  void fit(std::span<const Sample> data, Rng &rng) override { model_.fit(data, fit_, rng); }
  std::shared_ptr<const PosteriorModel> snapshot() const override { return model_.snapshot(); }
  const DualModel &model() const { return model_; }

 private:
  DualModel model_;
  FitConfig fit_;
};

class LogitLearner final : public Learner {
 public:
  LogitLearner(MappingArch arch, FitConfig fit, Rng &rng) : model_(std::move(arch), rng), fit_(fit) {}

  void fit(std::span<const Sample> data, Rng &rng) override { model_.fit(data, fit_, rng); }
  std::shared_ptr<const PosteriorModel> snapshot() const override { return model_.snapshot(); }
  const LogitModel &model() const { return model_; }

 private:
  LogitModel model_;
  FitConfig fit_;
};

/// Checkpoint holding either model kind.
struct Checkpoint {
  std::string kind;  // "dual" or "logit"
  std::unique_ptr<DualModel> dual;
  std::unique_ptr<LogitModel> logit;

  std::shared_ptr<const PosteriorModel> snapshot() const;
};

Checkpoint load_checkpoint(std::istream &is);
Checkpoint load_checkpoint_file(const std::string &path);

}  // namespace dual
