#include "trajpred/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace trajpred {

double sample_loss(const Prediction& prediction, const Trajectory& truth) {
  if (prediction.rows() != truth.rows()) throw ShapeError("trajectory_loss: step count mismatch");
  if (!prediction.allFinite() || !truth.allFinite()) {
    throw NumericError("trajectory_loss: non-finite input");
  }
  return (prediction - truth).squaredNorm();
}

double trajectory_loss(std::span<const Prediction> predictions, std::span<const Trajectory> truths) {
  if (predictions.size() != truths.size()) throw ShapeError("trajectory_loss: batch size mismatch");
  if (predictions.empty()) throw ShapeError("trajectory_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += sample_loss(predictions[i], truths[i]);
  return total / static_cast<double>(predictions.size());
}

OptimizerState OptimizerState::for_params(const ParamStore<double>& params, const AdamConfig& config) {
  OptimizerState s;
  s.config = config;
  for (ParamId id = 0; id < params.size(); ++id) {
    const auto& v = params.value(id);
    s.first_moment.push_back(Matrix<double>::Zero(v.rows(), v.cols()));
    s.second_moment.push_back(Matrix<double>::Zero(v.rows(), v.cols()));
  }
  return s;
}

void adam_step(ParamStore<double>& params, const GradientBuffer<double>& grads, OptimizerState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }
  for (ParamId id = 0; id < params.size(); ++id) {
    if (grads[id].rows() != params.value(id).rows() || grads[id].cols() != params.value(id).cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params.name(id));
    }
    if (!grads[id].allFinite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " + params.name(id));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (ParamId id = 0; id < params.size(); ++id) {
    Matrix<double>& m = state.first_moment[id];
    Matrix<double>& v = state.second_moment[id];
    const Matrix<double>& g = grads[id];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    params.value(id).array() -= c.learning_rate * (m.array() / correction1) /
                                ((v.array() / correction2).sqrt() + c.epsilon);
  }
}

double mean_loss(const Model& model, std::span<const TrajectorySample> samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& s : samples) total += (forward(model, s) - s.future).squaredNorm();
  return total / static_cast<double>(samples.size());
}

namespace {

double shard_gradient(const Model& model, std::span<const TrajectorySample> samples,
                      std::span<const std::size_t> indices, double scale,
                      GradientBuffer<double>& grads) {
  double total = 0.0;
  ForwardTrace trace;
  for (std::size_t i : indices) {
    const TrajectorySample& s = samples[i];
    const Prediction pred = forward(model, s, &trace);
    total += (pred - s.future).squaredNorm();
    const Trajectory dpred = (2.0 * scale) * (pred - s.future);
    backward(model, trace, dpred, grads);
  }
  return total;
}

}  // namespace

double accumulate_batch_gradient(const Model& model, std::span<const TrajectorySample> samples,
                                 std::span<const std::size_t> batch, GradientBuffer<double>& grads,
                                 int threads) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto shards = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(batch.size())));
  if (shards == 1) return shard_gradient(model, samples, batch, scale, grads);

  std::vector<GradientBuffer<double>> local(shards, model.params().make_gradient_buffer());
  std::vector<double> losses(shards, 0.0);
  std::vector<std::thread> workers;
  const std::size_t per = (batch.size() + shards - 1) / shards;
  for (std::size_t k = 0; k < shards; ++k) {
    const std::size_t begin = std::min(batch.size(), k * per);
    const std::size_t end = std::min(batch.size(), begin + per);
    workers.emplace_back([&, k, begin, end] {
      losses[k] = shard_gradient(model, samples, batch.subspan(begin, end - begin), scale, local[k]);
    });
  }
  for (auto& w : workers) w.join();
  double total = 0.0;
  for (std::size_t k = 0; k < shards; ++k) {
    grads += local[k];
    total += losses[k];
  }
  return total;
}

TrainResult train(const DatasetSplit& data, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
  if (data.train.empty()) throw std::invalid_argument("train: training split is empty");
  if (train_config.epochs < 1 || train_config.batch_size < 1) {
    throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  }
  Model model(model_config, train_config.seed);
  OptimizerState optimizer = OptimizerState::for_params(model.params(), train_config.adam);
  std::mt19937_64 rng(train_config.seed);

  TrainResult result{model, 0, {}};
  double best_validation = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  GradientBuffer<double>& grads = model.params().grads();

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    Model last_finite = model;
    if (train_config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(train_config.batch_size));
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      model.params().zero_grads();
      const double batch_total =
          accumulate_batch_gradient(model, data.train, batch, grads, train_config.threads);
      if (!std::isfinite(batch_total)) {
        throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch),
                              last_finite, result.history);
      }
      epoch_total += batch_total;
      try {
        adam_step(model.params(), grads, optimizer);
      } catch (const NumericError& e) {
        throw DivergenceError(e.what(), last_finite, result.history);
      }
    }

    EpochLoss loss;
    loss.epoch = epoch;
    loss.train_loss = epoch_total / static_cast<double>(order.size());
    loss.validation_loss = mean_loss(model, data.validation);
    result.history.push_back(loss);

    if (data.validation.empty()) {
      result.best = model;
      result.best_epoch = epoch;
    } else if (!std::isfinite(loss.validation_loss)) {
      throw DivergenceError("validation loss became non-finite in epoch " + std::to_string(epoch),
                            last_finite, result.history);
    } else if (loss.validation_loss < best_validation) {
      best_validation = loss.validation_loss;
      result.best = model;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(loss, model);
  }
  result.best.params().zero_grads();
  return result;
}

}  // namespace trajpred
