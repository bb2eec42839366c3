#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dual/mapping.hpp"
#include "oracles.hpp"

namespace dual {
namespace {

MappingArch small_arch() {
  MappingArch arch;
  arch.vocab_sizes = {5, 7};
  arch.embed_dim = 3;
  arch.hidden = {4};
  arch.output_dim = 2;
  return arch;
}

SparseFeature two_field_feature() {
  return SparseFeature{{FeatureGroup{0, {1, 3, 3}}, FeatureGroup{1, {6}}}};
}

// Straight-line re-implementation of the forward arithmetic with plain loops.
std::vector<double> reference_forward(const SparseFeature &x, const MappingParams &p) {
  const std::size_t dim = static_cast<std::size_t>(p.embed_dim());
  std::vector<double> act(p.num_fields() * dim, 0.0);
  for (const auto &g : x.groups) {
    for (std::size_t idx : g.indices) {
      for (std::size_t c = 0; c < dim; ++c) {
        act[g.field * dim + c] += p.embeddings[g.field](static_cast<Index>(idx), static_cast<Index>(c));
      }
    }
  }
  for (const auto &layer : p.layers) {
    std::vector<double> next(static_cast<std::size_t>(layer.weight.rows()));
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      double acc = layer.bias[r];
      for (Index c = 0; c < layer.weight.cols(); ++c) acc += layer.weight(r, c) * act[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = layer.activation == Activation::kTanh ? std::tanh(acc) : acc;
    }
    act = std::move(next);
  }
  return act;
}

TEST(EmbedPool, SelectsAndSumsRows) {
  Matrix table(3, 2);
  table << 1, 2, 3, 4, 5, 6;
  const std::vector<std::size_t> one{1}, twice{1, 1}, pair{0, 2};
  EXPECT_EQ(embed_pool(one, table), (Vector(2) << 3, 4).finished());
  EXPECT_EQ(embed_pool(twice, table), (Vector(2) << 6, 8).finished());
  EXPECT_EQ(embed_pool(pair, table), (Vector(2) << 6, 8).finished());
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(embed_pool(bad, table), IndexOutOfVocabulary);
}

TEST(Forward, ZeroWeightsGiveZeroHidden) {
  const auto params = MappingParams::zeros(small_arch());
  const Vector h = forward(two_field_feature(), params);
  EXPECT_EQ(h.size(), 2);
  EXPECT_TRUE(h.isZero(0.0));
}

TEST(Forward, IdentityLayerReturnsEmbeddingRow) {
  MappingArch arch;
  arch.vocab_sizes = {4};
  arch.embed_dim = 3;
  arch.hidden = {};
  arch.output_dim = 3;
  Rng rng(3);
  auto params = MappingParams::initialize(arch, rng);
  params.layers[0].weight = Matrix::Identity(3, 3);
  const Vector h = forward(SparseFeature::one_hot(0, 2), params);
  EXPECT_EQ(h, params.embeddings[0].row(2).transpose());
}

TEST(Forward, MatchesStraightLineReference) {
  Rng rng(5);
  auto arch = small_arch();
  arch.hidden = {4, 3};
  const auto params = MappingParams::initialize(arch, rng);
  const auto x = two_field_feature();
  const Vector h = forward(x, params);
  const auto expected = reference_forward(x, params);
  ASSERT_EQ(static_cast<std::size_t>(h.size()), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(h[static_cast<Index>(i)], expected[i], 1e-14);
}

TEST(Forward, OutOfVocabularyThrows) {
  Rng rng(1);
  const auto params = MappingParams::initialize(small_arch(), rng);
  EXPECT_THROW(forward(SparseFeature::one_hot(0, 5), params), IndexOutOfVocabulary);
  EXPECT_THROW(forward(SparseFeature::one_hot(2, 0), params), IndexOutOfVocabulary);
  EXPECT_THROW(forward(SparseFeature{}, params), IndexOutOfVocabulary);
}

TEST(Forward, PureFunction) {
  Rng rng(2);
  const auto params = MappingParams::initialize(small_arch(), rng);
  EXPECT_EQ(forward(two_field_feature(), params), forward(two_field_feature(), params));
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(4);
  const auto params = MappingParams::initialize(small_arch(), rng);
  MappingTape tape;
  forward(two_field_feature(), params, &tape);
  const auto grads = backward(tape, Vector::Zero(2), params);
  Vector flat(grads.num_parameters());
  grads.flatten_into(flat);
  EXPECT_TRUE(flat.isZero(0.0));
}

TEST(Backward, LinearLayerOuterProduct) {
  MappingArch arch;
  arch.vocab_sizes = {3};
  arch.embed_dim = 2;
  arch.hidden = {};
  arch.output_dim = 2;
  Rng rng(8);
  const auto params = MappingParams::initialize(arch, rng);
  const SparseFeature x{{FeatureGroup{0, {0, 2}}}};
  MappingTape tape;
  forward(x, params, &tape);
  const Vector upstream = (Vector(2) << 0.7, -1.3).finished();
  const auto grads = backward(tape, upstream, params);
  const Vector pooled = params.embeddings[0].row(0).transpose() + params.embeddings[0].row(2).transpose();
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) {
      EXPECT_NEAR(grads.weights[0](i, j), upstream[i] * pooled[j], 1e-15);
    }
  }
  // Row 1 was not touched.
  EXPECT_TRUE(grads.embeddings[0].row(1).isZero(0.0));
}

TEST(Backward, MismatchedTapeThrows) {
  Rng rng(9);
  const auto params = MappingParams::initialize(small_arch(), rng);
  MappingTape tape;
  forward(two_field_feature(), params, &tape);
  EXPECT_THROW(backward(tape, Vector::Zero(3), params), TapeMismatch);
  auto other_arch = small_arch();
  other_arch.hidden = {4, 4};
  const auto other = MappingParams::initialize(other_arch, rng);
  EXPECT_THROW(backward(tape, Vector::Zero(2), other), TapeMismatch);
}

TEST(BackwardProperty, MatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    MappingArch arch;
    const std::size_t fields = 1 + uniform_index(rng, 2);
    for (std::size_t f = 0; f < fields; ++f) arch.vocab_sizes.push_back(2 + uniform_index(rng, 9));
    arch.embed_dim = 1 + uniform_index(rng, 4);
    arch.hidden = {1 + uniform_index(rng, 8)};
    arch.output_dim = 1 + uniform_index(rng, 3);
    auto params = MappingParams::initialize(arch, rng);
    // Larger embeddings so tanh is exercised away from its linear regime.
    for (auto &table : params.embeddings) table *= 10.0;

    SparseFeature x;
    for (std::size_t f = 0; f < fields; ++f) {
      FeatureGroup g{f, {}};
      const std::size_t active = 1 + uniform_index(rng, 3);
      for (std::size_t k = 0; k < active; ++k) g.indices.push_back(uniform_index(rng, arch.vocab_sizes[f]));
      x.groups.push_back(g);
    }
    const Vector projection = oracle::random_matrix(static_cast<Index>(arch.output_dim), 1, rng);

    MappingTape tape;
    forward(x, params, &tape);
    const auto grads = backward(tape, projection, params);
    Vector analytic(grads.num_parameters());
    grads.flatten_into(analytic);

    Vector flat(params.num_parameters());
    params.flatten_into(flat);
    auto probe = params;
    const auto objective = [&](const Vector &theta) {
      probe.assign_from(theta);
      return projection.dot(forward(x, probe));
    };
    const Vector numeric = oracle::central_difference(objective, flat, 1e-5);
    EXPECT_LE(oracle::max_relative_error(analytic, numeric, 1e-4), 1e-4) << "trial " << trial;
  }
}

TEST(Backward, UntouchedRowsStayExactlyZero) {
  Rng rng(21);
  const auto params = MappingParams::initialize(small_arch(), rng);
  MappingTape tape;
  forward(two_field_feature(), params, &tape);
  const auto grads = backward(tape, Vector::Ones(2), params);
  for (Index r : {0, 2, 4}) EXPECT_TRUE(grads.embeddings[0].row(r).isZero(0.0));
  for (Index r = 0; r < 6; ++r) EXPECT_TRUE(grads.embeddings[1].row(r).isZero(0.0));
  EXPECT_FALSE(grads.embeddings[0].row(3).isZero(0.0));
}

TEST(MappingCheckpoint, RoundTripIsBitExact) {
  Rng rng(33);
  auto arch = small_arch();
  arch.hidden = {5, 3};
  const auto params = MappingParams::initialize(arch, rng);
  std::stringstream buffer;
  write_mapping(buffer, params);
  const auto loaded = read_mapping(buffer);
  ASSERT_EQ(loaded.layers.size(), params.layers.size());
  for (std::size_t f = 0; f < params.embeddings.size(); ++f) {
    EXPECT_EQ(loaded.embeddings[f], params.embeddings[f]);
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    EXPECT_EQ(loaded.layers[k].weight, params.layers[k].weight);
    EXPECT_EQ(loaded.layers[k].bias, params.layers[k].bias);
    EXPECT_EQ(loaded.layers[k].activation, params.layers[k].activation);
  }
}

TEST(MappingCheckpoint, TruncatedInputIsAnIoError) {
  Rng rng(34);
  std::stringstream buffer;
  write_mapping(buffer, MappingParams::initialize(small_arch(), rng));
  std::string text = buffer.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_mapping(truncated), IoError);
}

}  // namespace
}  // namespace dual
