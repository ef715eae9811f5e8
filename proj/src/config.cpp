#include "trajpred/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace trajpred {
namespace {

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const Json& j) { return fnv1a_hex(j.dump()); }

std::string to_string(LengthUnit unit) { return unit == LengthUnit::kFeet ? "feet" : "meters"; }

LengthUnit parse_unit(const std::string& s) {
  if (s == "meters") return LengthUnit::kMeters;
  if (s == "feet") return LengthUnit::kFeet;
  throw ConfigError("unit must be 'meters' or 'feet', got '" + s + "'");
}

Json to_json(const SynthConfig& c) {
  return Json{{"n_vehicles", c.n_vehicles},
              {"n_lanes", c.n_lanes},
              {"duration_frames", c.duration_frames},
              {"speed_range", {c.speed_min, c.speed_max}},
              {"lane_change_prob", c.lane_change_prob},
              {"lane_change_frames", c.lane_change_frames},
              {"curvature", {{"amplitude", c.curvature_amplitude}, {"period", c.curvature_period}}},
              {"lane_width", c.lane_width},
              {"spawn_range", c.spawn_range},
              {"braking",
               {{"prob", c.braking_prob}, {"decel", c.braking_decel}, {"frames", c.braking_frames}}},
              {"follow_leader", c.follow_leader},
              {"reaction_frames", c.reaction_frames},
              {"seed", c.seed}};
}

Json to_json(const DataConfig& c) {
  return Json{{"input", c.input},
              {"unit", to_string(c.unit)},
              {"history_steps", c.samples.history_steps},
              {"future_steps", c.samples.future_steps},
              {"downsample_factor", c.samples.downsample_factor},
              {"maneuver_window", c.samples.maneuver_window},
              {"braking_ratio", c.samples.braking_ratio},
              {"grid", {{"channels", c.samples.grid.channels},
                        {"cells", c.samples.grid.cells},
                        {"half_range", c.samples.grid.half_range}}},
              {"split_ratios", c.split_ratios},
              {"split_seed", c.split_seed},
              {"samples_dir", c.samples_dir}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"history_steps", c.history_steps},   {"horizon", c.horizon},
              {"embed_dim", c.embed_dim},           {"hidden_dim", c.hidden_dim},
              {"ffn_dim", c.ffn_dim},               {"heads", c.heads},
              {"decoder_hidden", c.decoder_hidden}, {"grid_channels", c.grid_channels},
              {"grid_cells", c.grid_cells},         {"variant", to_string(c.variant)},
              {"decoder_input", "every_step"}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"shuffle", c.shuffle},
              {"threads", c.threads},
              {"learning_rate", c.adam.learning_rate},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"epsilon", c.adam.epsilon}};
}

ModelConfig model_config_from_json(const Json& j) {
  const std::string s = "model";
  check_keys(j,
             {"history_steps", "horizon", "embed_dim", "hidden_dim", "ffn_dim", "heads",
              "decoder_hidden", "grid_channels", "grid_cells", "variant", "decoder_input"},
             s);
  ModelConfig c;
  read(j, "history_steps", c.history_steps, s);
  read(j, "horizon", c.horizon, s);
  read(j, "embed_dim", c.embed_dim, s);
  read(j, "hidden_dim", c.hidden_dim, s);
  read(j, "ffn_dim", c.ffn_dim, s);
  read(j, "heads", c.heads, s);
  read(j, "decoder_hidden", c.decoder_hidden, s);
  read(j, "grid_channels", c.grid_channels, s);
  read(j, "grid_cells", c.grid_cells, s);
  std::string variant = to_string(c.variant);
  read(j, "variant", variant, s);
  std::string decoder_input = "every_step";
  read(j, "decoder_input", decoder_input, s);
  if (decoder_input != "every_step") {
    throw ConfigError("model.decoder_input: only 'every_step' is supported");
  }
  try {
    c.variant = parse_variant(variant);
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return c;
}

namespace {

SynthConfig parse_synth(const Json& j, std::uint64_t default_seed) {
  const std::string s = "synth";
  check_keys(j,
             {"n_vehicles", "n_lanes", "duration_frames", "speed_range", "lane_change_prob",
              "lane_change_frames", "curvature", "lane_width", "spawn_range", "braking",
              "follow_leader", "reaction_frames", "seed"},
             s);
  SynthConfig c;
  c.seed = default_seed;
  read(j, "n_vehicles", c.n_vehicles, s);
  read(j, "n_lanes", c.n_lanes, s);
  read(j, "duration_frames", c.duration_frames, s);
  if (j.contains("speed_range")) {
    std::array<double, 2> range{};
    read(j, "speed_range", range, s);
    c.speed_min = range[0];
    c.speed_max = range[1];
  }
  read(j, "lane_change_prob", c.lane_change_prob, s);
  read(j, "lane_change_frames", c.lane_change_frames, s);
  if (j.contains("curvature")) {
    const Json& cv = j.at("curvature");
    check_keys(cv, {"amplitude", "period"}, "synth.curvature");
    read(cv, "amplitude", c.curvature_amplitude, "synth.curvature");
    read(cv, "period", c.curvature_period, "synth.curvature");
  }
  read(j, "lane_width", c.lane_width, s);
  read(j, "spawn_range", c.spawn_range, s);
  if (j.contains("braking")) {
    const Json& b = j.at("braking");
    check_keys(b, {"prob", "decel", "frames"}, "synth.braking");
    read(b, "prob", c.braking_prob, "synth.braking");
    read(b, "decel", c.braking_decel, "synth.braking");
    read(b, "frames", c.braking_frames, "synth.braking");
  }
  read(j, "follow_leader", c.follow_leader, s);
  read(j, "reaction_frames", c.reaction_frames, s);
  read(j, "seed", c.seed, s);
  c.validate();
  return c;
}

DataConfig parse_data(const Json& j, std::uint64_t default_seed) {
  const std::string s = "data";
  check_keys(j,
             {"input", "unit", "history_steps", "future_steps", "downsample_factor",
              "maneuver_window", "braking_ratio", "grid", "split_ratios", "split_seed",
              "samples_dir"},
             s);
  DataConfig c;
  c.split_seed = default_seed;
  read(j, "input", c.input, s);
  std::string unit = "meters";
  read(j, "unit", unit, s);
  c.unit = parse_unit(unit);
  read(j, "history_steps", c.samples.history_steps, s);
  read(j, "future_steps", c.samples.future_steps, s);
  read(j, "downsample_factor", c.samples.downsample_factor, s);
  read(j, "maneuver_window", c.samples.maneuver_window, s);
  read(j, "braking_ratio", c.samples.braking_ratio, s);
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    check_keys(g, {"channels", "cells", "half_range"}, "data.grid");
    read(g, "channels", c.samples.grid.channels, "data.grid");
    read(g, "cells", c.samples.grid.cells, "data.grid");
    read(g, "half_range", c.samples.grid.half_range, "data.grid");
  }
  read(j, "split_ratios", c.split_ratios, s);
  read(j, "split_seed", c.split_seed, s);
  read(j, "samples_dir", c.samples_dir, s);
  if (c.samples.history_steps < 2 || c.samples.future_steps < 1 || c.samples.downsample_factor < 1) {
    throw ConfigError("data: history_steps >= 2, future_steps >= 1, downsample_factor >= 1 required");
  }
  const double sum = c.split_ratios[0] + c.split_ratios[1] + c.split_ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("data.split_ratios must sum to 1");
  return c;
}

TrainConfig parse_train(const Json& j, std::uint64_t default_seed) {
  const std::string s = "train";
  check_keys(j,
             {"epochs", "batch_size", "seed", "shuffle", "threads", "learning_rate", "beta1", "beta2",
              "epsilon"},
             s);
  TrainConfig c;
  c.seed = default_seed;
  read(j, "epochs", c.epochs, s);
  read(j, "batch_size", c.batch_size, s);
  read(j, "seed", c.seed, s);
  read(j, "shuffle", c.shuffle, s);
  read(j, "threads", c.threads, s);
  read(j, "learning_rate", c.adam.learning_rate, s);
  read(j, "beta1", c.adam.beta1, s);
  read(j, "beta2", c.adam.beta2, s);
  read(j, "epsilon", c.adam.epsilon, s);
  if (c.epochs < 1 || c.batch_size < 1 || c.threads < 1) {
    throw ConfigError("train: epochs, batch_size and threads must be >= 1");
  }
  return c;
}

EvaluateConfig parse_evaluate(const Json& j) {
  const std::string s = "evaluate";
  check_keys(j, {"split", "predictors"}, s);
  EvaluateConfig c;
  read(j, "split", c.split, s);
  if (j.contains("predictors")) {
    if (!j.at("predictors").is_array()) throw ConfigError("evaluate.predictors: expected an array");
    for (const Json& p : j.at("predictors")) {
      check_keys(p, {"tag", "type", "checkpoint", "velocity"}, "evaluate.predictors[]");
      PredictorSpec spec;
      std::string type;
      read(p, "tag", spec.tag, s);
      read(p, "type", type, s);
      read(p, "checkpoint", spec.checkpoint, s);
      std::string velocity = "last";
      read(p, "velocity", velocity, s);
      if (type == "model") {
        spec.kind = PredictorSpec::Kind::kModel;
        if (spec.checkpoint.empty()) throw ConfigError("evaluate: model predictor needs a checkpoint");
      } else if (type == "constant_velocity") {
        spec.kind = PredictorSpec::Kind::kConstantVelocity;
      } else {
        throw ConfigError("evaluate: predictor type must be 'model' or 'constant_velocity'");
      }
      if (velocity == "last") {
        spec.velocity = VelocityEstimate::kLastDisplacement;
      } else if (velocity == "average") {
        spec.velocity = VelocityEstimate::kAverage;
      } else {
        throw ConfigError("evaluate: velocity must be 'last' or 'average'");
      }
      if (spec.tag.empty()) throw ConfigError("evaluate: every predictor needs a tag");
      c.predictors.push_back(std::move(spec));
    }
  }
  return c;
}

}  // namespace

RunConfig parse_run_config(const Json& doc) {
  check_keys(doc, {"seed", "synth", "data", "model", "train", "evaluate", "predict", "export_plot"},
             "config");
  RunConfig c;
  read(doc, "seed", c.seed, "config");
  c.synth = parse_synth(doc.value("synth", Json::object()), c.seed);
  c.data = parse_data(doc.value("data", Json::object()), c.seed);

  Json model = doc.value("model", Json::object());
  if (model.is_object()) {
    if (!model.contains("history_steps")) model["history_steps"] = c.data.samples.history_steps;
    if (!model.contains("horizon")) model["horizon"] = c.data.samples.future_steps;
    if (!model.contains("grid_channels")) model["grid_channels"] = c.data.samples.grid.channels;
    if (!model.contains("grid_cells")) model["grid_cells"] = c.data.samples.grid.cells;
  }
  c.model = model_config_from_json(model);
  c.train = parse_train(doc.value("train", Json::object()), c.seed);
  c.evaluate = parse_evaluate(doc.value("evaluate", Json::object()));

  const Json predict = doc.value("predict", Json::object());
  check_keys(predict, {"checkpoint", "split", "sample_ids"}, "predict");
  read(predict, "checkpoint", c.predict.checkpoint, "predict");
  read(predict, "split", c.predict.split, "predict");
  read(predict, "sample_ids", c.predict.sample_ids, "predict");

  const Json plot = doc.value("export_plot", Json::object());
  check_keys(plot, {"inputs"}, "export_plot");
  read(plot, "inputs", c.export_plot.inputs, "export_plot");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_run_config(doc);
}

Json to_json(const RunConfig& c) {
  Json predictors = Json::array();
  for (const auto& p : c.evaluate.predictors) {
    Json j{{"tag", p.tag},
           {"type", p.kind == PredictorSpec::Kind::kModel ? "model" : "constant_velocity"},
           {"velocity", p.velocity == VelocityEstimate::kAverage ? "average" : "last"}};
    if (!p.checkpoint.empty()) j["checkpoint"] = p.checkpoint;
    predictors.push_back(std::move(j));
  }
  return Json{{"seed", c.seed},
              {"synth", to_json(c.synth)},
              {"data", to_json(c.data)},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"evaluate", {{"split", c.evaluate.split}, {"predictors", predictors}}},
              {"predict",
               {{"checkpoint", c.predict.checkpoint},
                {"split", c.predict.split},
                {"sample_ids", c.predict.sample_ids}}},
              {"export_plot", {{"inputs", c.export_plot.inputs}}}};
}

}  // namespace trajpred
