#pragma once

#include "trajpred/data_pipeline.hpp"
#include "trajpred/model.hpp"

#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajpred {

class EmptyEvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RmseReport {
  std::vector<double> per_step;
  std::size_t sample_count = 0;
  std::string model_tag;
};

/// sqrt(mean_i |pred_i(t) - truth_i(t)|^2) for each step t.
std::vector<double> rmse_per_step(std::span<const Prediction> predictions,
                                  std::span<const Trajectory> truths);

enum class VelocityEstimate {
  kLastDisplacement,  // p_T - p_{T-1}
  kAverage,           // (p_T - p_1) / (T - 1)
};

Prediction constant_velocity_predict(const Trajectory& history, int horizon = 5,
                                     VelocityEstimate estimate = VelocityEstimate::kLastDisplacement);

using Predictor = std::function<Prediction(const TrajectorySample&)>;

Predictor make_model_predictor(const Model& model);
Predictor make_constant_velocity_predictor(int horizon,
                                           VelocityEstimate estimate = VelocityEstimate::kLastDisplacement);

RmseReport evaluate(const Predictor& predictor, std::span<const TrajectorySample> samples,
                    const std::string& model_tag);

/// Table with one row per report and one column per step.
void write_report_table(std::ostream& out, std::span<const RmseReport> reports);
/// model_tag,step,rmse
void write_rmse_csv(std::ostream& out, std::span<const RmseReport> reports);
/// step,<tag1>,<tag2>,...
void write_plot_csv(std::ostream& out, std::span<const RmseReport> reports);

std::string format_double(double v);

}  // namespace trajpred
