#include "dual/mapping.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

SparseFeature concat(const SparseFeature &a, const SparseFeature &b) {
  SparseFeature out = a;
  out.groups.insert(out.groups.end(), b.groups.begin(), b.groups.end());
  return out;
}

const char *activation_name(Activation activation) {
  switch (activation) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string &name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  throw IoError("unknown activation '" + name + "'");
}

namespace {

std::vector<std::size_t> layer_widths(const MappingArch &arch) {
  std::vector<std::size_t> widths;
  widths.push_back(arch.vocab_sizes.size() * arch.embed_dim);
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.output_dim);
  return widths;
}

void check_arch(const MappingArch &arch) {
  if (arch.vocab_sizes.empty()) throw ShapeError("mapping: at least one field required");
  if (arch.embed_dim == 0) throw ShapeError("mapping: embed_dim must be positive");
  if (arch.output_dim == 0) throw ShapeError("mapping: output_dim must be positive");
  if (!(arch.embed_init >= 0)) throw ShapeError("mapping: embed_init must be >= 0");
  for (std::size_t v : arch.vocab_sizes) {
    if (v == 0) throw ShapeError("mapping: empty vocabulary");
  }
  for (std::size_t h : arch.hidden) {
    if (h == 0) throw ShapeError("mapping: zero-width hidden layer");
  }
}

}  // namespace

MappingParams MappingParams::initialize(const MappingArch &arch, Rng &rng) {
  check_arch(arch);
  MappingParams params;
  std::uniform_real_distribution<double> embed_init(-arch.embed_init, arch.embed_init);
  for (std::size_t vocab : arch.vocab_sizes) {
    Matrix table(vocab, arch.embed_dim);
    for (Index r = 0; r < table.rows(); ++r) {
      for (Index c = 0; c < table.cols(); ++c) table(r, c) = embed_init(rng);
    }
    params.embeddings.push_back(std::move(table));
  }
  const auto widths = layer_widths(arch);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[k]));
    DenseLayer layer;
    layer.weight.resize(widths[k + 1], widths[k]);
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = scale * standard_normal(rng);
    }
    layer.bias = Vector::Zero(widths[k + 1]);
    layer.activation = (k + 2 == widths.size()) ? Activation::kIdentity : Activation::kTanh;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

MappingParams MappingParams::zeros(const MappingArch &arch) {
  check_arch(arch);
  MappingParams params;
  for (std::size_t vocab : arch.vocab_sizes) {
    params.embeddings.push_back(Matrix::Zero(vocab, arch.embed_dim));
  }
  const auto widths = layer_widths(arch);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    params.layers.push_back({Matrix::Zero(widths[k + 1], widths[k]), Vector::Zero(widths[k + 1]),
                             (k + 2 == widths.size()) ? Activation::kIdentity : Activation::kTanh});
  }
  return params;
}

std::vector<std::size_t> MappingParams::vocab_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto &table : embeddings) sizes.push_back(static_cast<std::size_t>(table.rows()));
  return sizes;
}

void MappingParams::validate() const {
  if (embeddings.empty()) throw ShapeError("mapping: no embedding tables");
  for (const auto &table : embeddings) {
    if (table.cols() != embed_dim()) throw ShapeError("mapping: embedding widths differ");
    if (!table.allFinite()) throw ShapeError("mapping: non-finite embedding");
  }
  Index width = input_dim();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto &layer = layers[k];
    if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("mapping: layer " + std::to_string(k) + " does not chain");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw ShapeError("mapping: non-finite weights in layer " + std::to_string(k));
    }
    width = layer.weight.rows();
  }
}

Index MappingParams::num_parameters() const {
  Index n = 0;
  for (const auto &table : embeddings) n += table.size();
  for (const auto &layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

void MappingParams::flatten_into(Eigen::Ref<Vector> out) const {
  Index offset = 0;
  for (const auto &table : embeddings) {
    out.segment(offset, table.size()) = table.reshaped();
    offset += table.size();
  }
  for (const auto &layer : layers) {
    out.segment(offset, layer.weight.size()) = layer.weight.reshaped();
    offset += layer.weight.size();
    out.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
}

void MappingParams::assign_from(const Eigen::Ref<const Vector> &flat) {
  Index offset = 0;
  for (auto &table : embeddings) {
    table.reshaped() = flat.segment(offset, table.size());
    offset += table.size();
  }
  for (auto &layer : layers) {
    layer.weight.reshaped() = flat.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias = flat.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

MappingGrads MappingGrads::zeros_like(const MappingParams &params) {
  MappingGrads grads;
  for (const auto &table : params.embeddings) {
    grads.embeddings.push_back(Matrix::Zero(table.rows(), table.cols()));
  }
  for (const auto &layer : params.layers) {
    grads.weights.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    grads.biases.push_back(Vector::Zero(layer.bias.size()));
  }
  return grads;
}

void MappingGrads::set_zero() {
  for (auto &g : embeddings) g.setZero();
  for (auto &g : weights) g.setZero();
  for (auto &g : biases) g.setZero();
}

Index MappingGrads::num_parameters() const {
  Index n = 0;
  for (const auto &g : embeddings) n += g.size();
  for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
  return n;
}

void MappingGrads::flatten_into(Eigen::Ref<Vector> out) const {
  Index offset = 0;
  for (const auto &g : embeddings) {
    out.segment(offset, g.size()) = g.reshaped();
    offset += g.size();
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.segment(offset, weights[k].size()) = weights[k].reshaped();
    offset += weights[k].size();
    out.segment(offset, biases[k].size()) = biases[k];
    offset += biases[k].size();
  }
}

Vector embed_pool(std::span<const std::size_t> indices, const Matrix &table) {
  Vector pooled = Vector::Zero(table.cols());
  for (std::size_t index : indices) {
    if (index >= static_cast<std::size_t>(table.rows())) {
      throw IndexOutOfVocabulary("index " + std::to_string(index) + " outside vocabulary of " +
                                 std::to_string(table.rows()));
    }
    pooled += table.row(static_cast<Index>(index)).transpose();
  }
  return pooled;
}

void check_feature(const SparseFeature &x, const MappingParams &params) {
  if (x.groups.empty()) throw IndexOutOfVocabulary("feature has no fields");
  for (const auto &group : x.groups) {
    if (group.field >= params.num_fields()) {
      throw IndexOutOfVocabulary("field " + std::to_string(group.field) + " not in schema of " +
                                 std::to_string(params.num_fields()) + " fields");
    }
    const auto vocab = static_cast<std::size_t>(params.embeddings[group.field].rows());
    for (std::size_t index : group.indices) {
      if (index >= vocab) {
        throw IndexOutOfVocabulary("field " + std::to_string(group.field) + ": index " +
                                   std::to_string(index) + " >= vocabulary " +
                                   std::to_string(vocab));
      }
    }
  }
}

Vector forward(const SparseFeature &x, const MappingParams &params, MappingTape *tape) {
  check_feature(x, params);
  const Index dim = params.embed_dim();
  Vector input = Vector::Zero(params.input_dim());
  for (const auto &group : x.groups) {
    input.segment(static_cast<Index>(group.field) * dim, dim) +=
        embed_pool(group.indices, params.embeddings[group.field]);
  }
  if (tape != nullptr) {
    tape->groups = x.groups;
    tape->activations.clear();
    tape->activations.push_back(input);
  }
  Vector h = std::move(input);
  for (const auto &layer : params.layers) {
    Vector z = layer.weight * h + layer.bias;
    if (layer.activation == Activation::kTanh) z = z.array().tanh().matrix();
    if (tape != nullptr) tape->activations.push_back(z);
    h = std::move(z);
  }
  return h;
}

void backward(const MappingTape &tape, const Eigen::Ref<const Vector> &upstream,
              const MappingParams &params, MappingGrads &grads) {
  if (tape.activations.size() != params.layers.size() + 1 ||
      tape.activations.front().size() != params.input_dim() ||
      upstream.size() != params.output_dim() ||
      grads.weights.size() != params.layers.size() ||
      grads.embeddings.size() != params.embeddings.size()) {
    throw TapeMismatch("backward: tape, upstream or gradient buffers do not match parameters");
  }
  Vector delta = upstream;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto &layer = params.layers[k];
    const Vector &out = tape.activations[k + 1];
    if (layer.activation == Activation::kTanh) {
      delta.array() *= 1.0 - out.array().square();
    }
    grads.weights[k].noalias() += delta * tape.activations[k].transpose();
    grads.biases[k] += delta;
    delta = layer.weight.transpose() * delta;
  }
  const Index dim = params.embed_dim();
  for (const auto &group : tape.groups) {
    const auto slice = delta.segment(static_cast<Index>(group.field) * dim, dim).transpose();
    for (std::size_t index : group.indices) {
      grads.embeddings[group.field].row(static_cast<Index>(index)) += slice;
    }
  }
}

MappingGrads backward(const MappingTape &tape, const Eigen::Ref<const Vector> &upstream,
                      const MappingParams &params) {
  MappingGrads grads = MappingGrads::zeros_like(params);
  backward(tape, upstream, params, grads);
  return grads;
}

void write_mapping(std::ostream &os, const MappingParams &params) {
  io::write_count(os, "fields", params.embeddings.size());
  for (std::size_t f = 0; f < params.embeddings.size(); ++f) {
    io::write_matrix(os, "embedding", params.embeddings[f]);
  }
  io::write_count(os, "layers", params.layers.size());
  for (const auto &layer : params.layers) {
    os << "activation " << activation_name(layer.activation) << '\n';
    io::write_matrix(os, "weight", layer.weight);
    io::write_vector(os, "bias", layer.bias);
  }
}

MappingParams read_mapping(std::istream &is) {
  MappingParams params;
  const auto fields = io::read_count(is, "fields");
  for (std::uint64_t f = 0; f < fields; ++f) {
    params.embeddings.push_back(io::read_matrix(is, "embedding"));
  }
  const auto layers = io::read_count(is, "layers");
  for (std::uint64_t k = 0; k < layers; ++k) {
    DenseLayer layer;
    io::expect_token(is, "activation");
    layer.activation = parse_activation(io::read_token(is));
    layer.weight = io::read_matrix(is, "weight");
    layer.bias = io::read_vector(is, "bias");
    params.layers.push_back(std::move(layer));
  }
  try {
    params.validate();
  } catch (const ShapeError &e) {
    throw IoError(std::string("corrupt mapping checkpoint: ") + e.what());
  }
  return params;
}

}  // namespace dual
