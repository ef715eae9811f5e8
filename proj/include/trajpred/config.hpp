#pragma once

// Run configuration document and JSON conversions. Unknown keys are errors.

#include "trajpred/data_pipeline.hpp"
#include "trajpred/evaluation.hpp"
#include "trajpred/model.hpp"
#include "trajpred/synth.hpp"
#include "trajpred/training.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trajpred {

using Json = nlohmann::json;

struct DataConfig {
  std::string input = "records.csv";
  LengthUnit unit = LengthUnit::kMeters;
  SampleConfig samples;
  std::array<double, 3> split_ratios = {0.7, 0.1, 0.2};
  std::uint64_t split_seed = 0;
  std::string samples_dir = "samples";
};

struct PredictorSpec {
  std::string tag;
  enum class Kind { kModel, kConstantVelocity } kind = Kind::kConstantVelocity;
  std::string checkpoint;
  VelocityEstimate velocity = VelocityEstimate::kLastDisplacement;
};

struct EvaluateConfig {
  std::string split = "test";
  std::vector<PredictorSpec> predictors;
};

struct PredictConfig {
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::size_t> sample_ids;
};

struct ExportPlotConfig {
  std::vector<std::string> inputs;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvaluateConfig evaluate;
  PredictConfig predict;
  ExportPlotConfig export_plot;
};

/// Parses a run configuration; throws ConfigError on unknown keys or bad values.
/// Section seeds default to the top-level seed, and model history/horizon
/// default to the data section's.
RunConfig parse_run_config(const Json& doc);
RunConfig load_run_config(const std::string& path);

Json to_json(const RunConfig& config);
Json to_json(const SynthConfig& config);
Json to_json(const DataConfig& config);
Json to_json(const ModelConfig& config);
Json to_json(const TrainConfig& config);

ModelConfig model_config_from_json(const Json& j);

/// FNV-1a 64-bit, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Hash of the canonical (sorted-key, compact) dump.
std::string config_hash(const Json& j);

std::string to_string(LengthUnit unit);
LengthUnit parse_unit(const std::string& s);

}  // namespace trajpred
