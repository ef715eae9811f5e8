#include "trajpred/config.hpp"
#include "trajpred/io.hpp"
#include "trajpred/selfcheck.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace trajpred {
namespace {

SampleSet sample_set(int n) {
  SampleSet set;
  set.split = "train";
  set.config_hash = "0123456789abcdef";
  set.data_hash = "fedcba9876543210";
  for (int i = 0; i < n; ++i) {
    auto s = random_tiny_sample(15, 5, 3, 13, i % 5, 100 + static_cast<std::uint64_t>(i));
    s.dataset_id = 2;
    s.vehicle_id = 10 + i;
    s.anchor_frame = 40 + 2 * i;
    if (i % 2 == 0) s.maneuver = ManeuverLabel{LateralManeuver::kRight, LongitudinalManeuver::kBraking};
    set.samples.push_back(std::move(s));
  }
  return set;
}

void expect_same(const TrajectorySample& a, const TrajectorySample& b) {
  EXPECT_EQ(a.target_history, b.target_history);
  EXPECT_EQ(a.future, b.future);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.dataset_id, b.dataset_id);
  EXPECT_EQ(a.vehicle_id, b.vehicle_id);
  EXPECT_EQ(a.anchor_frame, b.anchor_frame);
  EXPECT_EQ(a.maneuver, b.maneuver);
  ASSERT_EQ(a.neighbors.size(), b.neighbors.size());
  for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
    EXPECT_EQ(a.neighbors[k].cell, b.neighbors[k].cell);
    EXPECT_EQ(a.neighbors[k].vehicle_id, b.neighbors[k].vehicle_id);
    EXPECT_EQ(a.neighbors[k].history, b.neighbors[k].history);
  }
}

TEST(Samples, RoundTripIsBitExact) {
  const SampleSet set = sample_set(6);
  std::stringstream buf;
  write_samples(buf, set);
  const std::string bytes = buf.str();
  const SampleSet back = read_samples(buf);
  EXPECT_EQ(back.split, set.split);
  EXPECT_EQ(back.config_hash, set.config_hash);
  EXPECT_EQ(back.data_hash, set.data_hash);
  ASSERT_EQ(back.samples.size(), set.samples.size());
  for (std::size_t i = 0; i < set.samples.size(); ++i) expect_same(back.samples[i], set.samples[i]);
  std::stringstream again;
  write_samples(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Samples, EmptySet) {
  std::stringstream buf;
  write_samples(buf, sample_set(0));
  EXPECT_TRUE(read_samples(buf).samples.empty());
}

TEST(Samples, BadMagicVersionAndTruncation) {
  std::stringstream buf;
  write_samples(buf, sample_set(2));
  const std::string bytes = buf.str();

  std::string magic = bytes;
  magic[0] = 'X';
  std::istringstream m(magic);
  EXPECT_THROW(read_samples(m), FormatError);

  std::string version = bytes;
  version[8] = 9;
  std::istringstream v(version);
  EXPECT_THROW(read_samples(v), FormatError);

  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_samples(cut), FormatError);

  std::istringstream ckpt(bytes);
  EXPECT_THROW(read_checkpoint(ckpt), FormatError);
}

ModelConfig small_model() {
  ModelConfig c;
  c.embed_dim = 4;
  c.hidden_dim = 8;
  c.ffn_dim = 8;
  c.decoder_hidden = 6;
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint ck{Model(small_model(), 9), "fedcba9876543210"};
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const std::string bytes = buf.str();
  const Checkpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.data_hash, ck.data_hash);
  EXPECT_EQ(back.model.config(), ck.model.config());
  ASSERT_EQ(back.model.params().size(), ck.model.params().size());
  for (ParamId id = 0; id < ck.model.params().size(); ++id) {
    EXPECT_EQ(back.model.params().name(id), ck.model.params().name(id));
    EXPECT_EQ(back.model.params().value(id), ck.model.params().value(id));
  }
  std::stringstream again;
  write_checkpoint(again, back);
  EXPECT_EQ(again.str(), bytes);

  // Predictions of the restored model match too.
  const auto s = random_tiny_sample(15, 5, 3, 13, 3, 1);
  EXPECT_EQ(forward(back.model, s), forward(ck.model, s));
}

TEST(Checkpoint, CorruptHeader) {
  std::stringstream buf;
  write_checkpoint(buf, Checkpoint{Model(small_model()), "x"});
  std::string bytes = buf.str();
  bytes[3] = '?';
  std::istringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/best.ckpt"), FormatError);
}

TEST(Checkpoint, Compatibility) {
  const SampleSet set = sample_set(2);
  const Checkpoint ok{Model(small_model()), set.data_hash};
  EXPECT_NO_THROW(check_compatible(ok, set));

  const Checkpoint other_data{Model(small_model()), "0000000000000000"};
  EXPECT_THROW(check_compatible(other_data, set), CompatibilityError);

  ModelConfig longer = small_model();
  longer.history_steps = 10;
  const Checkpoint shape{Model(longer), set.data_hash};
  EXPECT_THROW(check_compatible(shape, set), CompatibilityError);
}

TEST(Hashing, Fnv1a) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
  EXPECT_EQ(config_hash(Json{{"b", 1}, {"a", 2}}), config_hash(Json{{"a", 2}, {"b", 1}}));
  EXPECT_NE(config_hash(Json{{"a", 1}}), config_hash(Json{{"a", 2}}));
}

TEST(RunConfig, DefaultsAndSeedPropagation) {
  const RunConfig c = parse_run_config(Json{{"seed", 17}});
  EXPECT_EQ(c.synth.seed, 17u);
  EXPECT_EQ(c.data.split_seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.model, ModelConfig{});
  EXPECT_EQ(c.data.unit, LengthUnit::kMeters);

  const RunConfig d = parse_run_config(Json{{"seed", 17}, {"train", {{"seed", 3}}}});
  EXPECT_EQ(d.train.seed, 3u);
  EXPECT_EQ(d.synth.seed, 17u);
}

TEST(RunConfig, ModelInheritsDataShapes) {
  const RunConfig c =
      parse_run_config(Json{{"data", {{"history_steps", 10}, {"future_steps", 3}}}});
  EXPECT_EQ(c.model.history_steps, 10);
  EXPECT_EQ(c.model.horizon, 3);
}

TEST(RunConfig, RoundTripThroughJson) {
  const Json doc = {{"seed", 5},
                    {"synth", {{"n_vehicles", 12}, {"braking", {{"prob", 0.01}}}}},
                    {"model", {{"embed_dim", 8}, {"variant", "naive_lstm"}}},
                    {"evaluate",
                     {{"predictors",
                       {{{"tag", "cv"}, {"type", "constant_velocity"}, {"velocity", "average"}}}}}}};
  const RunConfig c = parse_run_config(doc);
  const Json once = to_json(c);
  EXPECT_EQ(to_json(parse_run_config(once)), once);
  EXPECT_EQ(c.model.variant, ModelVariant::kNaiveLstm);
  ASSERT_EQ(c.evaluate.predictors.size(), 1u);
  EXPECT_EQ(c.evaluate.predictors[0].velocity, VelocityEstimate::kAverage);
}

TEST(RunConfig, Rejections) {
  EXPECT_THROW(parse_run_config(Json{{"sed", 1}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"model", {{"hiden_dim", 8}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"model", {{"decoder_input", "first_step"}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"model", {{"heads", 5}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"data", {{"unit", "yards"}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"data", {{"split_ratios", {0.5, 0.5, 0.5}}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"synth", {{"n_lanes", 9}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"train", {{"epochs", "ten"}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(Json{{"evaluate", {{"predictors", {{{"tag", "m"}, {"type", "model"}}}}}}}),
               ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

}  // namespace
}  // namespace trajpred
