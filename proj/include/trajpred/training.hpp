#pragma once

#include "trajpred/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajpred {

/// Mean over samples of the per-sample sum over steps of squared x and y
/// errors.
double trajectory_loss(std::span<const Prediction> predictions, std::span<const Trajectory> truths);

/// Per-sample term of trajectory_loss.
double sample_loss(const Prediction& prediction, const Trajectory& truth);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<Matrix<double>> first_moment;
  std::vector<Matrix<double>> second_moment;
  std::int64_t step = 0;

  static OptimizerState for_params(const ParamStore<double>& params, const AdamConfig& config = {});
};

/// One bias-corrected Adam update. Throws NumericError naming the first
/// parameter with a non-finite gradient; nothing is modified in that case.
void adam_step(ParamStore<double>& params, const GradientBuffer<double>& grads, OptimizerState& state);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Gradient shards per batch; each shard is reduced in index order.
  int threads = 1;
  AdamConfig adam;
};

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  // NaN when the validation split is empty.
  double validation_loss = 0.0;
};

struct TrainResult {
  Model best;
  int best_epoch = 0;
  std::vector<EpochLoss> history;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, Model last_finite, std::vector<EpochLoss> history)
      : std::runtime_error(what), last_finite_(std::move(last_finite)), history_(std::move(history)) {}
  const Model& last_finite() const { return last_finite_; }
  const std::vector<EpochLoss>& history() const { return history_; }

 private:
  Model last_finite_;
  std::vector<EpochLoss> history_;
};

/// Loss over a sample set with per-sample mean normalization (no gradient).
double mean_loss(const Model& model, std::span<const TrajectorySample> samples);

/// Adds d(loss)/d(params) of the batch-mean loss into `grads`; returns the
/// summed per-sample loss.
double accumulate_batch_gradient(const Model& model, std::span<const TrajectorySample> samples,
                                 std::span<const std::size_t> batch, GradientBuffer<double>& grads,
                                 int threads = 1);

using EpochCallback = std::function<void(const EpochLoss&, const Model&)>;

/// Seeded epoch loop with best-validation checkpoint selection. With an empty
/// validation split the final model is kept.
TrainResult train(const DatasetSplit& data, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

}  // namespace trajpred
