#include "trajpred/model.hpp"
#include "trajpred/selfcheck.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace trajpred {
namespace {

using testing::random_trajectory;

ModelConfig small_config(ModelVariant variant = ModelVariant::kFull) {
  ModelConfig c;
  c.history_steps = 5;
  c.horizon = 3;
  c.embed_dim = 6;
  c.hidden_dim = 8;
  c.ffn_dim = 16;
  c.heads = 2;
  c.decoder_hidden = 10;
  c.variant = variant;
  return c;
}

TEST(ModelConfig, CombinedDimensions) {
  ModelConfig full;
  EXPECT_EQ(full.combined_dim(), 2560);
  ModelConfig naive;
  naive.variant = ModelVariant::kNaiveLstm;
  EXPECT_EQ(naive.combined_dim(), 64);
  ModelConfig bad;
  bad.heads = 7;
  EXPECT_THROW(bad.validate(), ShapeError);
  EXPECT_EQ(parse_variant("naive_lstm"), ModelVariant::kNaiveLstm);
  EXPECT_THROW(parse_variant("lstm"), std::invalid_argument);
}

TEST(Model, DefaultSizedParameterShapes) {
  const Model m(ModelConfig{});
  const auto& p = m.params();
  EXPECT_EQ(p.value("target.embed.weight").rows(), 32);
  EXPECT_EQ(p.value("target.lstm.w_ih").cols(), 32);
  EXPECT_EQ(p.value("target.lstm.w_hh").rows(), 4 * 64);
  EXPECT_EQ(p.value("neighbor.lstm.w_hh").cols(), 64);
  EXPECT_EQ(p.value("target.transformer.ffn_in.weight").rows(), 512);
  EXPECT_EQ(p.value("decoder.lstm.w_ih").rows(), 4 * 128);
  EXPECT_EQ(p.value("decoder.lstm.w_ih").cols(), 2560);
  EXPECT_EQ(p.value("decoder.head.weight").rows(), 2);
  EXPECT_FALSE(Model(ModelConfig{.variant = ModelVariant::kNaiveLstm}).params().contains("neighbor.lstm.w_ih"));
}

TEST(EncodeTarget, ZeroParamsGiveNormBias) {
  Model m(small_config());
  auto& p = m.params();
  for (ParamId id = 0; id < p.size(); ++id) p.value(id).setZero();
  std::mt19937_64 rng(1);
  Matrix<double>& beta = p.value("target.transformer.norm2.bias");
  beta = testing::random_matrix(8, 1, rng);
  const Vector<double> z = encode_target(m, random_trajectory(5, rng));
  ASSERT_EQ(z.size(), 8);
  EXPECT_EQ(z, beta.col(0));
}

TEST(EncodeTarget, PureAndShaped) {
  const Model m(ModelConfig{}, 3);
  std::mt19937_64 rng(2);
  const Trajectory h = random_trajectory(15, rng);
  const Vector<double> a = encode_target(m, h);
  EXPECT_EQ(a.size(), 64);
  EXPECT_EQ(a, encode_target(m, h));
}

TEST(EncodeTarget, WrongHistoryLength) {
  const Model m(small_config());
  EXPECT_THROW(encode_target(m, Trajectory::Zero(4, 2)), ShapeError);
}

TEST(EncodeNeighbors, EmptyGrid) {
  const Model m(small_config(), 1);
  const SocialEncoding grid = encode_neighbors(m, {}, OccupancyMask());
  EXPECT_EQ(grid.rows(), 39);
  EXPECT_EQ(grid.cols(), 8);
  EXPECT_TRUE((grid.array() == 0.0).all());
}

TEST(EncodeNeighbors, SharedWeightsAcrossCells) {
  const Model m(small_config(), 1);
  std::mt19937_64 rng(3);
  const Trajectory h = random_trajectory(5, rng);
  const std::vector<NeighborHistory> n = {{GridCell{0, 2}, 1, h}, {GridCell{2, 9}, 2, h}};
  OccupancyMask mask;
  mask.set({0, 2});
  mask.set({2, 9});
  const SocialEncoding grid = encode_neighbors(m, n, mask);
  EXPECT_EQ(grid.row(0 * 13 + 2), grid.row(2 * 13 + 9));
  EXPECT_GT(grid.row(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EncodeNeighbors, NaiveVariantHasNoNeighborBranch) {
  const Model m(small_config(ModelVariant::kNaiveLstm));
  EXPECT_THROW(encode_neighbors(m, {}, OccupancyMask()), ShapeError);
}

TrajectorySample sample_for(const ModelConfig& c, int neighbors, std::uint64_t seed) {
  return random_tiny_sample(c.history_steps, c.horizon, c.grid_channels, c.grid_cells, neighbors, seed);
}

TEST(Forward, OutputShape) {
  const ModelConfig c = small_config();
  const Model m(c, 2);
  for (int n : {0, 1, 6}) {
    const Prediction p = forward(m, sample_for(c, n, 10 + n));
    EXPECT_EQ(p.rows(), 3);
    EXPECT_TRUE(p.allFinite());
  }
}

TEST(Forward, BatchEqualsPerSample) {
  const ModelConfig c = small_config();
  const Model m(c, 2);
  std::vector<TrajectorySample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(sample_for(c, i * 2, 20 + i));
  const auto out = forward(m, batch);
  ASSERT_EQ(out.size(), 4u);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_LE((out[i] - forward(m, batch[i])).cwiseAbs().maxCoeff(), 1e-12);
  }
  const std::vector<TrajectorySample> one = {batch[1]};
  EXPECT_EQ(forward(m, one)[0], forward(m, batch[1]));
}

TEST(Forward, NeighborOrderDoesNotMatter) {
  const ModelConfig c = small_config();
  const Model m(c, 4);
  TrajectorySample s = sample_for(c, 5, 30);
  const Prediction a = forward(m, s);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(s.neighbors.begin(), s.neighbors.end(), rng);
    EXPECT_LE((forward(m, s) - a).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, GridMismatch) {
  const ModelConfig c = small_config();
  const Model m(c);
  TrajectorySample s = sample_for(c, 0, 1);
  s.mask = OccupancyMask(3, 5);
  EXPECT_THROW(forward(m, s), ShapeError);
}

// With no neighbors the full model's social block is zero, so it computes
// the naive model whose decoder sees only the target columns.
TEST(Forward, EmptyGridReducesToNaiveVariant) {
  const Model full(small_config(ModelVariant::kFull), 5);
  Model naive(small_config(ModelVariant::kNaiveLstm), 6);
  auto& np = naive.params();
  const auto& fp = full.params();
  for (ParamId id = 0; id < np.size(); ++id) {
    const std::string& name = np.name(id);
    if (name == "decoder.lstm.w_ih") {
      np.value(id) = fp.value(name).rightCols(8);
    } else {
      np.value(id) = fp.value(name);
    }
  }
  const TrajectorySample s = sample_for(full.config(), 0, 7);
  EXPECT_LE((forward(full, s) - forward(naive, s)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, GradientsMatchFiniteDifferences) {
  for (const auto& c : gradient_suite()) {
    if (c.name.rfind("model+loss", 0) == 0) {
      EXPECT_TRUE(c.passed) << c.name << " " << c.max_relative_error << " at " << c.worst_parameter;
    }
  }
}

}  // namespace
}  // namespace trajpred
