#include "trajpred/evaluation.hpp"
#include "trajpred/synth.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace trajpred {
namespace {

TEST(RmsePerStep, PerfectPrediction) {
  std::mt19937_64 rng(1);
  const std::vector<Trajectory> t = {testing::random_trajectory(5, rng), testing::random_trajectory(5, rng)};
  EXPECT_EQ(rmse_per_step(t, t), std::vector<double>(5, 0.0));
}

TEST(RmsePerStep, ThreeFourFive) {
  std::mt19937_64 rng(2);
  std::vector<Trajectory> truth, pred;
  for (int i = 0; i < 4; ++i) {
    truth.push_back(testing::random_trajectory(5, rng));
    Trajectory p = truth.back();
    p.col(0).array() += 3.0;
    p.col(1).array() += 4.0;
    pred.push_back(p);
  }
  for (double v : rmse_per_step(pred, truth)) EXPECT_NEAR(v, 5.0, 1e-12);
}

TEST(RmsePerStep, RootOfMeanSquare) {
  // Step-1 squared displacements 1 and 9.
  const std::vector<Trajectory> truth = {Trajectory::Zero(1, 2), Trajectory::Zero(1, 2)};
  Trajectory a(1, 2), b(1, 2);
  a << 1.0, 0.0;
  b << 0.0, 3.0;
  const std::vector<Prediction> pred = {a, b};
  EXPECT_EQ(rmse_per_step(pred, truth)[0], std::sqrt(5.0));
}

TEST(RmsePerStep, EmptyAndMismatch) {
  EXPECT_THROW(rmse_per_step({}, {}), EmptyEvaluationError);
  const std::vector<Trajectory> one = {Trajectory::Zero(5, 2)};
  const std::vector<Trajectory> two = {Trajectory::Zero(5, 2), Trajectory::Zero(5, 2)};
  EXPECT_THROW(rmse_per_step(one, two), ShapeError);
}

TEST(RmsePerStep, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::vector<Trajectory> p, t;
  for (int i = 0; i < 7; ++i) {
    p.push_back(testing::random_trajectory(5, rng));
    t.push_back(testing::random_trajectory(5, rng));
  }
  const auto base = rmse_per_step(p, t);
  std::reverse(p.begin(), p.end());
  std::reverse(t.begin(), t.end());
  const auto rev = rmse_per_step(p, t);
  for (int s = 0; s < 5; ++s) EXPECT_NEAR(rev[static_cast<std::size_t>(s)], base[static_cast<std::size_t>(s)], 1e-12);
}

TEST(ConstantVelocity, LinearExtrapolation) {
  Trajectory h(15, 2);
  for (int t = 0; t < 15; ++t) h.row(t) << 0.0, -2.0 * (14 - t);
  const Prediction p = constant_velocity_predict(h);
  ASSERT_EQ(p.rows(), 5);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(p(k, 0), 0.0);
    EXPECT_EQ(p(k, 1), 2.0 * (k + 1));
  }
}

TEST(ConstantVelocity, Stationary) {
  const Trajectory h = Trajectory::Constant(15, 2, 3.5);
  const Prediction p = constant_velocity_predict(h);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(p.row(k), h.row(14));
}

TEST(ConstantVelocity, AverageEstimate) {
  Trajectory h(3, 2);
  h << 0.0, 0.0, 0.0, 1.0, 0.0, 4.0;  // last step 3, average 2
  EXPECT_EQ(constant_velocity_predict(h, 1, VelocityEstimate::kLastDisplacement)(0, 1), 7.0);
  EXPECT_EQ(constant_velocity_predict(h, 1, VelocityEstimate::kAverage)(0, 1), 6.0);
}

TEST(ConstantVelocity, LinearTruthGivesZeroError) {
  std::vector<TrajectorySample> samples;
  for (int i = 0; i < 3; ++i) {
    TrajectorySample s;
    s.target_history.resize(15, 2);
    s.future.resize(5, 2);
    const double vx = 0.1 * i, vy = 1.5 + i;
    for (int t = 0; t < 15; ++t) s.target_history.row(t) << vx * (t - 14), vy * (t - 14);
    for (int k = 0; k < 5; ++k) s.future.row(k) << vx * (k + 1), vy * (k + 1);
    samples.push_back(s);
  }
  const auto report = evaluate(make_constant_velocity_predictor(5), samples, "cv");
  for (double v : report.per_step) EXPECT_LE(v, 1e-12);
  EXPECT_EQ(report.sample_count, 3u);
  EXPECT_EQ(report.model_tag, "cv");
}

TEST(Evaluate, OracleAndDeterminism) {
  std::mt19937_64 rng(4);
  std::vector<TrajectorySample> samples(5);
  for (auto& s : samples) {
    s.target_history = testing::random_trajectory(15, rng);
    s.future = testing::random_trajectory(5, rng);
  }
  const Predictor oracle = [](const TrajectorySample& s) { return s.future; };
  EXPECT_EQ(evaluate(oracle, samples, "oracle").per_step, std::vector<double>(5, 0.0));
  const auto cv = make_constant_velocity_predictor(5);
  EXPECT_EQ(evaluate(cv, samples, "a").per_step, evaluate(cv, samples, "a").per_step);
  EXPECT_THROW(evaluate(cv, {}, "a"), EmptyEvaluationError);
}

TEST(Evaluate, CurvedTrajectoriesGrowWithHorizon) {
  SynthConfig config;
  config.n_vehicles = 30;
  config.duration_frames = 200;
  config.curvature_amplitude = 1.5;
  config.curvature_period = 80;
  config.spawn_range = 3000;
  config.seed = 5;
  const auto samples = build_samples(generate(config));
  ASSERT_GT(samples.size(), 500u);
  const auto r = evaluate(make_constant_velocity_predictor(5), samples, "cv");
  for (std::size_t s = 1; s < 5; ++s) EXPECT_GT(r.per_step[s], r.per_step[s - 1]);
}

TEST(Reports, Formats) {
  const std::vector<RmseReport> reports = {{{0.5, 1.25}, 10, "model"}, {{1.0, 2.0}, 10, "cv"}};
  std::ostringstream table, csv, plot;
  write_report_table(table, reports);
  write_rmse_csv(csv, reports);
  write_plot_csv(plot, reports);
  EXPECT_EQ(csv.str(), "model_tag,step,rmse\nmodel,1,0.5\nmodel,2,1.25\ncv,1,1\ncv,2,2\n");
  EXPECT_EQ(plot.str(), "step,model,cv\n1,0.5,1\n2,1.25,2\n");
  EXPECT_NE(table.str().find("RMSE per prediction step"), std::string::npos);
  EXPECT_NE(table.str().find("1.2500"), std::string::npos);
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Synth, UnitStepsPerFrame) {
  SynthConfig config;
  config.n_vehicles = 1;
  config.speed_min = config.speed_max = 10.0;
  config.duration_frames = 100;
  const auto r = generate(config);
  ASSERT_EQ(r.size(), 100u);
  for (std::size_t k = 1; k < r.size(); ++k) {
    EXPECT_EQ(r[k].local_y - r[k - 1].local_y, 1.0) << k;
    EXPECT_EQ(r[k].local_x, r[0].local_x);
    EXPECT_EQ(r[k].frame_id, r[k - 1].frame_id + 1);
  }
}

TEST(Synth, DeterministicPerSeed) {
  SynthConfig config;
  config.lane_change_prob = 0.01;
  config.curvature_amplitude = 0.5;
  config.braking_prob = 0.01;
  config.follow_leader = true;
  config.seed = 11;
  EXPECT_EQ(generate(config), generate(config));
  SynthConfig other = config;
  other.seed = 12;
  EXPECT_NE(generate(config), generate(other));
}

TEST(Synth, NoLaneChangesWhenDisabled) {
  SynthConfig config;
  config.seed = 4;
  const auto r = generate(config);
  std::map<int, int> lanes;
  for (const auto& rec : r) {
    auto [it, inserted] = lanes.emplace(rec.vehicle_id, rec.lane_id);
    EXPECT_EQ(it->second, rec.lane_id);
    EXPECT_GE(rec.lane_id, 1);
    EXPECT_LE(rec.lane_id, config.n_lanes);
  }
}

TEST(Synth, LaneChangesMoveLaterally) {
  SynthConfig config;
  config.n_vehicles = 20;
  config.lane_change_prob = 0.02;
  config.seed = 6;
  int changes = 0;
  const auto r = generate(config);
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k].vehicle_id == r[k - 1].vehicle_id && r[k].lane_id != r[k - 1].lane_id) {
      ++changes;
      EXPECT_EQ(std::abs(r[k].lane_id - r[k - 1].lane_id), 1);
    }
  }
  EXPECT_GT(changes, 0);
}

TEST(Synth, FollowerBrakesBehindLeader) {
  // One lane, a braking leader and followers capped by its delayed speed.
  SynthConfig config;
  config.n_vehicles = 6;
  config.n_lanes = 1;
  config.duration_frames = 300;
  config.braking_prob = 0.02;
  config.follow_leader = true;
  config.seed = 3;
  const auto r = generate(config);
  std::map<int, std::vector<double>> speed;
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k].vehicle_id == r[k - 1].vehicle_id) {
      speed[r[k].vehicle_id].push_back((r[k].local_y - r[k - 1].local_y) / 0.1);
    }
  }
  // Every vehicle slows down at some point even if it never brakes itself.
  int slowed = 0;
  for (const auto& [id, v] : speed) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    slowed += *lo < 0.9 * *hi ? 1 : 0;
  }
  EXPECT_GE(slowed, 5);
}

TEST(Synth, ConfigValidation) {
  SynthConfig config;
  config.n_lanes = 7;
  EXPECT_THROW(generate(config), ConfigError);
  config.n_lanes = 3;
  config.speed_min = -1.0;
  EXPECT_THROW(generate(config), ConfigError);
  config.speed_min = 20.0;
  config.lane_change_prob = 1.5;
  EXPECT_THROW(generate(config), ConfigError);
}

TEST(Synth, StraightDataPassesPipelineInvariants) {
  SynthConfig config;
  config.n_vehicles = 25;
  config.duration_frames = 150;
  config.spawn_range = 400;
  config.seed = 8;
  std::vector<RawRecord> records = generate(config);
  normalize_lanes(records);
  const auto samples = build_samples(records);
  ASSERT_FALSE(samples.empty());
  for (const auto& s : samples) {
    ASSERT_EQ(s.mask.count(), static_cast<int>(s.neighbors.size()));
    ASSERT_EQ(s.target_history.row(14), Eigen::RowVector2d(0.0, 0.0));
  }
  const auto r = evaluate(make_constant_velocity_predictor(5), samples, "cv");
  for (double v : r.per_step) EXPECT_LE(v, 1e-9);
}

}  // namespace
}  // namespace trajpred
