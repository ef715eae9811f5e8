#include "trajpred/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace trajpred {

std::vector<double> rmse_per_step(std::span<const Prediction> predictions,
                                  std::span<const Trajectory> truths) {
  if (predictions.empty()) throw EmptyEvaluationError("rmse_per_step: no samples");
  if (predictions.size() != truths.size()) throw ShapeError("rmse_per_step: sample count mismatch");
  const Index steps = truths.front().rows();
  std::vector<double> sums(static_cast<std::size_t>(steps), 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].rows() != steps || truths[i].rows() != steps) {
      throw ShapeError("rmse_per_step: step count mismatch");
    }
    for (Index t = 0; t < steps; ++t) {
      sums[static_cast<std::size_t>(t)] += (predictions[i].row(t) - truths[i].row(t)).squaredNorm();
    }
  }
  for (double& s : sums) s = std::sqrt(s / static_cast<double>(predictions.size()));
  return sums;
}

Prediction constant_velocity_predict(const Trajectory& history, int horizon, VelocityEstimate estimate) {
  const Index n = history.rows();
  if (n < 2) throw ShapeError("constant_velocity_predict: need at least two history steps");
  const Eigen::RowVector2d last = history.row(n - 1);
  const Eigen::RowVector2d velocity = estimate == VelocityEstimate::kLastDisplacement
                                          ? Eigen::RowVector2d(last - history.row(n - 2))
                                          : Eigen::RowVector2d((last - history.row(0)) / double(n - 1));
  Prediction out(horizon, 2);
  for (int k = 0; k < horizon; ++k) out.row(k) = last + double(k + 1) * velocity;
  return out;
}

Predictor make_model_predictor(const Model& model) {
  return [&model](const TrajectorySample& s) { return forward(model, s); };
}

Predictor make_constant_velocity_predictor(int horizon, VelocityEstimate estimate) {
  return [horizon, estimate](const TrajectorySample& s) {
    return constant_velocity_predict(s.target_history, horizon, estimate);
  };
}

RmseReport evaluate(const Predictor& predictor, std::span<const TrajectorySample> samples,
                    const std::string& model_tag) {
  if (samples.empty()) throw EmptyEvaluationError("evaluate: empty test set");
  std::vector<Prediction> preds;
  std::vector<Trajectory> truths;
  preds.reserve(samples.size());
  truths.reserve(samples.size());
  for (const auto& s : samples) {
    preds.push_back(predictor(s));
    truths.push_back(s.future);
  }
  RmseReport report;
  report.per_step = rmse_per_step(preds, truths);
  report.sample_count = samples.size();
  report.model_tag = model_tag;
  return report;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_report_table(std::ostream& out, std::span<const RmseReport> reports) {
  std::size_t steps = 0;
  std::size_t tag_width = 5;
  for (const auto& r : reports) {
    steps = std::max(steps, r.per_step.size());
    tag_width = std::max(tag_width, r.model_tag.size());
  }
  char buf[64];
  out << "RMSE per prediction step (0.2 s)\n";
  out << std::string(tag_width, ' ').replace(0, 5, "Model");
  for (std::size_t t = 0; t < steps; ++t) {
    std::snprintf(buf, sizeof(buf), "  %8s", ("Step " + std::to_string(t + 1)).c_str());
    out << buf;
  }
  out << "  Samples\n";
  for (const auto& r : reports) {
    out << r.model_tag << std::string(tag_width - r.model_tag.size(), ' ');
    for (double v : r.per_step) {
      std::snprintf(buf, sizeof(buf), "  %8.4f", v);
      out << buf;
    }
    out << "  " << r.sample_count << '\n';
  }
}

void write_rmse_csv(std::ostream& out, std::span<const RmseReport> reports) {
  out << "model_tag,step,rmse\n";
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < r.per_step.size(); ++t) {
      out << r.model_tag << ',' << t + 1 << ',' << format_double(r.per_step[t]) << '\n';
    }
  }
}

void write_plot_csv(std::ostream& out, std::span<const RmseReport> reports) {
  std::size_t steps = 0;
  out << "step";
  for (const auto& r : reports) {
    out << ',' << r.model_tag;
    steps = std::max(steps, r.per_step.size());
  }
  out << '\n';
  for (std::size_t t = 0; t < steps; ++t) {
    out << t + 1;
    for (const auto& r : reports) {
      out << ',';
      if (t < r.per_step.size()) out << format_double(r.per_step[t]);
    }
    out << '\n';
  }
}

}  // namespace trajpred
