#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "dual/numkit.hpp"
#include "dual/random.hpp"

namespace dual {

/// Active indices of one categorical field. Repeated indices are allowed
/// and pool additively.
struct FeatureGroup {
  std::size_t field = 0;
  std::vector<std::size_t> indices;

  bool operator==(const FeatureGroup &) const = default;
};

/// Multi-hot feature vector stored as per-field index lists. A full model
/// input is the concatenation of user, ad and environment groups.
struct SparseFeature {
  std::vector<FeatureGroup> groups;

  static SparseFeature one_hot(std::size_t field, std::size_t index) {
    return SparseFeature{{FeatureGroup{field, {index}}}};
  }

  bool operator==(const SparseFeature &) const = default;
};

SparseFeature concat(const SparseFeature &a, const SparseFeature &b);

enum class Activation { kIdentity, kTanh };

const char *activation_name(Activation activation);
Activation parse_activation(const std::string &name);

/// Shape of the feature mapping: one embedding table per field, sum pooled
/// and concatenated, followed by tanh hidden layers and a linear output
/// layer of width `output_dim`.
struct MappingArch {
  std::vector<std::size_t> vocab_sizes;
  std::size_t embed_dim = 6;
  std::vector<std::size_t> hidden{16};
  std::size_t output_dim = 2;
  /// Embedding entries start uniform in [-embed_init, embed_init].
  double embed_init = 0.05;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::kIdentity;
};

struct MappingParams {
  std::vector<Matrix> embeddings;  // vocab x embed_dim, one per field
  std::vector<DenseLayer> layers;

  /// Embeddings uniform in [-embed_init, embed_init]; dense weights N(0, 1/fan_in);
  /// zero biases.
  static MappingParams initialize(const MappingArch &arch, Rng &rng);
  static MappingParams zeros(const MappingArch &arch);

  std::size_t num_fields() const { return embeddings.size(); }
  Index embed_dim() const { return embeddings.empty() ? 0 : embeddings.front().cols(); }
  Index input_dim() const { return static_cast<Index>(num_fields()) * embed_dim(); }
  Index output_dim() const { return layers.empty() ? input_dim() : layers.back().weight.rows(); }
  std::vector<std::size_t> vocab_sizes() const;

  /// Throws ShapeError if the layer chain is inconsistent or any weight is
  /// non-finite.
  void validate() const;

  Index num_parameters() const;
  void flatten_into(Eigen::Ref<Vector> out) const;
  void assign_from(const Eigen::Ref<const Vector> &flat);
};

/// Gradient buffers congruent with MappingParams. Rows of embedding tables
/// not touched by a batch stay exactly zero.
struct MappingGrads {
  std::vector<Matrix> embeddings;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static MappingGrads zeros_like(const MappingParams &params);
  void set_zero();
  Index num_parameters() const;
  void flatten_into(Eigen::Ref<Vector> out) const;
};

/// Everything backward needs from a forward call.
struct MappingTape {
  std::vector<FeatureGroup> groups;
  std::vector<Vector> activations;  // activations[0] is the pooled input
};

/// Elementwise sum of the selected rows of `table`.
Vector embed_pool(std::span<const std::size_t> indices, const Matrix &table);

/// Throws IndexOutOfVocabulary if `x` does not fit the tables in `params`.
void check_feature(const SparseFeature &x, const MappingParams &params);

/// Hidden representation of `x`. Fills `tape` when given.
Vector forward(const SparseFeature &x, const MappingParams &params, MappingTape *tape = nullptr);

/// Reverse-mode pass: accumulates d(upstream . forward(x)) / d(params)
/// into `grads`.
void backward(const MappingTape &tape, const Eigen::Ref<const Vector> &upstream,
              const MappingParams &params, MappingGrads &grads);

MappingGrads backward(const MappingTape &tape, const Eigen::Ref<const Vector> &upstream,
                      const MappingParams &params);

void write_mapping(std::ostream &os, const MappingParams &params);
MappingParams read_mapping(std::istream &is);

}  // namespace dual
