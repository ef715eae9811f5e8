#include "trajpred/selfcheck.hpp"
#include "trajpred/training.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trajpred {
namespace {

Trajectory traj(std::initializer_list<std::pair<double, double>> points) {
  Trajectory t(static_cast<Index>(points.size()), 2);
  Index r = 0;
  for (const auto& [x, y] : points) t.row(r++) << x, y;
  return t;
}

TEST(TrajectoryLoss, Examples) {
  const std::vector<Trajectory> truth = {traj({{1, 2}, {3, 4}})};
  EXPECT_EQ(trajectory_loss(truth, truth), 0.0);

  const std::vector<Prediction> p1 = {traj({{1, 1}})};
  const std::vector<Trajectory> t1 = {traj({{0, 0}})};
  EXPECT_EQ(trajectory_loss(p1, t1), 2.0);

  // Per-sample losses 2 and 4.
  const std::vector<Prediction> p2 = {traj({{1, 1}}), traj({{2, 0}})};
  const std::vector<Trajectory> t2 = {traj({{0, 0}}), traj({{0, 0}})};
  EXPECT_EQ(trajectory_loss(p2, t2), 3.0);

  // Sum over steps, not mean.
  const std::vector<Prediction> p3 = {traj({{1, 0}, {0, 2}})};
  const std::vector<Trajectory> t3 = {traj({{0, 0}, {0, 0}})};
  EXPECT_EQ(trajectory_loss(p3, t3), 5.0);
}

TEST(TrajectoryLoss, Errors) {
  const std::vector<Prediction> p = {traj({{1, 1}})};
  const std::vector<Trajectory> t2 = {traj({{0, 0}, {1, 1}})};
  EXPECT_THROW(trajectory_loss(p, t2), ShapeError);
  EXPECT_THROW(trajectory_loss({}, {}), ShapeError);
  const std::vector<Trajectory> nan = {traj({{std::nan(""), 0}})};
  EXPECT_THROW(trajectory_loss(p, nan), NumericError);
}

TEST(TrajectoryLoss, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 rng(1);
  std::vector<Prediction> p;
  std::vector<Trajectory> t;
  for (int i = 0; i < 9; ++i) {
    p.push_back(testing::random_trajectory(5, rng));
    t.push_back(testing::random_trajectory(5, rng));
  }
  const double base = trajectory_loss(p, t);
  EXPECT_GT(base, 0.0);
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), 0u);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Prediction> p2;
  std::vector<Trajectory> t2;
  for (auto i : idx) {
    p2.push_back(p[i]);
    t2.push_back(t[i]);
  }
  EXPECT_NEAR(trajectory_loss(p2, t2), base, 1e-12 * base);
}

struct Scalar1 {
  ParamStore<double> store;
  ParamId id;
  explicit Scalar1(double v) : id(store.add("p", 1, 1, ParamKind::kWeight)) { store.value(id)(0, 0) = v; }
  double value() const { return store.value(id)(0, 0); }
};

TEST(Adam, ZeroGradientLeavesParameters) {
  std::mt19937_64 rng(2);
  ParamStore<double> store;
  const ParamId a = store.add("a", 3, 2, ParamKind::kWeight);
  store.value(a) = testing::random_matrix(3, 2, rng);
  const Matrix<double> before = store.value(a);
  OptimizerState state = OptimizerState::for_params(store);
  adam_step(store, store.make_gradient_buffer(), state);
  EXPECT_EQ(store.value(a), before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepMagnitude) {
  Scalar1 s(0.5);
  OptimizerState state = OptimizerState::for_params(s.store);
  GradientBuffer<double> g = s.store.make_gradient_buffer();
  g[s.id](0, 0) = 1.0;
  adam_step(s.store, g, state);
  // m_hat = 1, v_hat = 1.
  EXPECT_DOUBLE_EQ(s.value(), 0.5 - 0.001 * (1.0 / (1.0 + 1e-8)));
}

TEST(Adam, ConstantGradientSteps) {
  Scalar1 s(0.0);
  OptimizerState state = OptimizerState::for_params(s.store);
  GradientBuffer<double> g = s.store.make_gradient_buffer();
  g[s.id](0, 0) = 1.0;
  double previous = s.value();
  for (int k = 0; k < 2; ++k) {
    adam_step(s.store, g, state);
    EXPECT_NEAR(previous - s.value(), 0.001, 1e-6);
    previous = s.value();
  }
  EXPECT_EQ(state.step, 2);
}

TEST(Adam, MatchesReferenceOverSeveralSteps) {
  // Scalar reference of the bias-corrected update.
  Scalar1 s(1.0);
  OptimizerState state = OptimizerState::for_params(s.store);
  GradientBuffer<double> g = s.store.make_gradient_buffer();
  double p = 1.0, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -1.2, 2.5, 0.0, -0.7};
  for (int k = 1; k <= 5; ++k) {
    const double gk = grads[k - 1];
    g[s.id](0, 0) = gk;
    adam_step(s.store, g, state);
    m = 0.9 * m + 0.1 * gk;
    v = 0.999 * v + 0.001 * gk * gk;
    const double mh = m / (1.0 - std::pow(0.9, k));
    const double vh = v / (1.0 - std::pow(0.999, k));
    p -= 0.001 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(s.value(), p, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientNamesParameterAndAborts) {
  ParamStore<double> store;
  store.add("first", 2, 2, ParamKind::kWeight);
  const ParamId b = store.add("second.bias", 2, 1, ParamKind::kBias);
  OptimizerState state = OptimizerState::for_params(store);
  GradientBuffer<double> g = store.make_gradient_buffer();
  g[0].setConstant(1.0);
  g[b](1, 0) = std::numeric_limits<double>::infinity();
  try {
    adam_step(store, g, state);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("second.bias"), std::string::npos);
  }
  EXPECT_TRUE((store.value(0).array() == 0.0).all());
  EXPECT_EQ(state.step, 0);
}

std::vector<TrajectorySample> tiny_set(int n, std::uint64_t seed) {
  const ModelConfig c = ModelConfig::tiny();
  std::vector<TrajectorySample> out;
  for (int i = 0; i < n; ++i) {
    auto s = random_tiny_sample(c.history_steps, c.horizon, c.grid_channels, c.grid_cells, i % 4,
                                seed + static_cast<std::uint64_t>(i));
    s.vehicle_id = i;
    out.push_back(std::move(s));
  }
  return out;
}

TEST(Train, DeterministicHistory) {
  DatasetSplit data;
  data.train = tiny_set(20, 1);
  data.validation = tiny_set(5, 100);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 6;
  tc.seed = 3;
  const auto a = train(data, ModelConfig::tiny(), tc);
  const auto b = train(data, ModelConfig::tiny(), tc);
  ASSERT_EQ(a.history.size(), 4u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].validation_loss, b.history[i].validation_loss);
  }
  for (ParamId id = 0; id < a.best.params().size(); ++id) {
    EXPECT_EQ(a.best.params().value(id), b.best.params().value(id));
  }
}

TEST(Train, BestCheckpointHasLowestValidationLoss) {
  DatasetSplit data;
  data.train = tiny_set(16, 1);
  data.validation = tiny_set(4, 200);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 4;
  tc.adam.learning_rate = 0.05;
  const auto r = train(data, ModelConfig::tiny(), tc);
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (const auto& e : r.history) {
    if (e.validation_loss < best) {
      best = e.validation_loss;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(mean_loss(r.best, data.validation), best);
}

TEST(Train, EmptyValidationKeepsLastModel) {
  DatasetSplit data;
  data.train = tiny_set(8, 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 3;
  std::optional<Model> last;
  const auto r = train(data, ModelConfig::tiny(), tc, [&](const EpochLoss& e, const Model& m) {
    EXPECT_TRUE(std::isnan(e.validation_loss));
    last = m;
  });
  ASSERT_TRUE(last.has_value());
  EXPECT_EQ(r.best_epoch, 3);
  for (ParamId id = 0; id < r.best.params().size(); ++id) {
    EXPECT_EQ(r.best.params().value(id), last->params().value(id));
  }
}

TEST(Train, TrainingLossDecreases) {
  DatasetSplit data;
  data.train = tiny_set(16, 7);
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 16;
  tc.adam.learning_rate = 0.01;
  const auto r = train(data, ModelConfig::tiny(), tc);
  EXPECT_LT(r.history.back().train_loss, 0.5 * r.history.front().train_loss);
}

TEST(Train, DivergenceKeepsLastFiniteModel) {
  DatasetSplit data;
  data.train = tiny_set(6, 1);
  data.train[4].future(0, 1) = 1e200;  // squared error overflows
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.shuffle = false;
  try {
    train(data, ModelConfig::tiny(), tc);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.history().empty());
    const Model fresh(ModelConfig::tiny(), tc.seed);
    for (ParamId id = 0; id < fresh.params().size(); ++id) {
      EXPECT_EQ(e.last_finite().params().value(id), fresh.params().value(id));
    }
  }
}

TEST(Train, ShardedGradientsAreReproducible) {
  const auto samples = tiny_set(10, 3);
  const Model m(ModelConfig::tiny(), 1);
  std::vector<std::size_t> batch(10);
  std::iota(batch.begin(), batch.end(), 0u);
  auto grads_for = [&](int threads) {
    GradientBuffer<double> g = m.params().make_gradient_buffer();
    accumulate_batch_gradient(m, samples, batch, g, threads);
    return g;
  };
  const auto serial = grads_for(1);
  const auto a = grads_for(3);
  const auto b = grads_for(3);
  for (ParamId id = 0; id < serial.size(); ++id) {
    EXPECT_EQ(a[id], b[id]);
    EXPECT_LE((a[id] - serial[id]).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + serial[id].cwiseAbs().maxCoeff()));
  }
}

TEST(Train, Preconditions) {
  DatasetSplit empty;
  EXPECT_THROW(train(empty, ModelConfig::tiny(), TrainConfig{}), std::invalid_argument);
}

}  // namespace
}  // namespace trajpred
