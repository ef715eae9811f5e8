#include "trajpred/cli.hpp"

#include "trajpred/config.hpp"
#include "trajpred/io.hpp"
#include "trajpred/selfcheck.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace trajpred {
namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::string> unit;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* const kSplits[] = {"train", "val", "test"};

fs::path resolve(const Options& opt, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(opt.out) / path;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Appends a timestamped line to the sidecar log.
void log_event(const fs::path& dir, const std::string& what) {
  fs::create_directories(dir);
  std::ofstream log(dir / "run.log", std::ios::app);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << what << '\n';
}

// Applies --seed and --unit to the raw document before validation. --seed
// replaces the top-level seed and the seed of the section the command uses.
RunConfig effective_config(const Options& opt, const std::string& command) {
  Json doc = Json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("cannot open config file '" + opt.config_path + "'");
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError("config '" + opt.config_path + "': " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  }
  if (opt.seed) {
    doc["seed"] = *opt.seed;
    auto set = [&](const char* section, const char* key) {
      if (!doc.contains(section)) doc[section] = Json::object();
      if (doc[section].is_object()) doc[section][key] = *opt.seed;
    };
    if (command == "synth") set("synth", "seed");
    if (command == "preprocess") set("data", "split_seed");
    if (command == "train") set("train", "seed");
  }
  if (opt.unit) {
    if (!doc.contains("data")) doc["data"] = Json::object();
    if (doc["data"].is_object()) doc["data"]["unit"] = *opt.unit;
  }
  return parse_run_config(doc);
}

fs::path samples_path(const Options& opt, const RunConfig& config, const std::string& split) {
  return resolve(opt, config.data.samples_dir) / (split + ".bin");
}

int cmd_synth(const Options& opt) {
  const RunConfig config = effective_config(opt, "synth");
  const auto records = generate(config.synth);
  std::ostringstream csv;
  write_records(csv, records);
  write_text(fs::path(opt.out) / "records.csv", csv.str());
  log_event(opt.out, "synth records=" + std::to_string(records.size()) +
                         " seed=" + std::to_string(config.synth.seed));
  std::cout << "wrote " << records.size() << " records to " << (fs::path(opt.out) / "records.csv").string()
            << '\n';
  return kExitOk;
}

int cmd_preprocess(const Options& opt) {
  const RunConfig config = effective_config(opt, "preprocess");
  const fs::path input = resolve(opt, config.data.input);
  const std::string bytes = read_bytes(input);
  std::istringstream in(bytes);
  auto records = parse_records(in, config.data.unit);
  normalize_lanes(records);
  const auto samples = build_samples(records, config.data.samples);
  const DatasetSplit split = split_dataset(samples, config.data.split_ratios, config.data.split_seed);

  const Json data_json = to_json(config.data);
  const std::string chash = config_hash(data_json);
  const std::string dhash = fnv1a_hex(data_json.dump() + '\n' + bytes);
  const std::vector<TrajectorySample>* parts[] = {&split.train, &split.validation, &split.test};
  for (int i = 0; i < 3; ++i) {
    const fs::path path = samples_path(opt, config, kSplits[i]);
    fs::create_directories(path.parent_path());
    save_samples(path.string(), SampleSet{kSplits[i], chash, dhash, *parts[i]});
  }
  log_event(opt.out, "preprocess samples=" + std::to_string(samples.size()) + " data_hash=" + dhash);
  std::cout << "samples: train " << split.train.size() << ", val " << split.validation.size() << ", test "
            << split.test.size() << " (data hash " << dhash << ")\n";
  return kExitOk;
}

std::string losses_csv(const std::vector<EpochLoss>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.validation_loss) << '\n';
  }
  return out.str();
}

void check_samples_match(const ModelConfig& model, const SampleSet& set) {
  for (const auto& s : set.samples) {
    if (s.target_history.rows() != model.history_steps || s.future.rows() != model.horizon ||
        s.mask.channels() != model.grid_channels || s.mask.cells() != model.grid_cells) {
      throw ConfigError("model config does not match the '" + set.split + "' samples");
    }
  }
}

int cmd_train(const Options& opt) {
  const RunConfig config = effective_config(opt, "train");
  const SampleSet train_set = load_samples(samples_path(opt, config, "train").string());
  const SampleSet val_set = load_samples(samples_path(opt, config, "val").string());
  if (train_set.data_hash != val_set.data_hash) {
    throw CompatibilityError("train and val splits come from different preprocessing runs");
  }
  check_samples_match(config.model, train_set);
  check_samples_match(config.model, val_set);

  const fs::path run_dir = fs::path(opt.out) / "runs" / to_string(config.model.variant);
  const fs::path ckpt_dir = run_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  Json echo = to_json(config);
  echo["config_hash"] = config_hash(to_json(config));
  echo["data_hash"] = train_set.data_hash;
  write_text(run_dir / "config.json", echo.dump(2) + '\n');
  log_event(run_dir, "train start seed=" + std::to_string(config.train.seed) +
                         " config_hash=" + echo["config_hash"].get<std::string>());

  DatasetSplit data;
  data.train = train_set.samples;
  data.validation = val_set.samples;
  const std::string dhash = train_set.data_hash;
  std::vector<EpochLoss> history;
  auto on_epoch = [&](const EpochLoss& e, const Model& model) {
    history.push_back(e);
    save_checkpoint((ckpt_dir / "last.ckpt").string(), Checkpoint{model, dhash});
    write_text(run_dir / "losses.csv", losses_csv(history));
    std::cout << "epoch " << e.epoch << " train " << format_double(e.train_loss) << " val "
              << format_double(e.validation_loss) << '\n';
  };
  try {
    const TrainResult result = train(data, config.model, config.train, on_epoch);
    save_checkpoint((ckpt_dir / "best.ckpt").string(), Checkpoint{result.best, dhash});
    log_event(run_dir, "train done best_epoch=" + std::to_string(result.best_epoch));
    std::cout << "best epoch " << result.best_epoch << ", checkpoint " << (ckpt_dir / "best.ckpt").string()
              << '\n';
  } catch (const DivergenceError& e) {
    save_checkpoint((ckpt_dir / "last_finite.ckpt").string(), Checkpoint{e.last_finite(), dhash});
    write_text(run_dir / "losses.csv", losses_csv(e.history()));
    write_text(run_dir / "divergence.txt", std::string(e.what()) + '\n');
    log_event(run_dir, std::string("train diverged: ") + e.what());
    throw RuntimeFailure(std::string("training diverged: ") + e.what());
  }
  return kExitOk;
}

int cmd_evaluate(const Options& opt) {
  const RunConfig config = effective_config(opt, "evaluate");
  if (config.evaluate.predictors.empty()) throw ConfigError("evaluate: no predictors configured");
  const SampleSet set = load_samples(samples_path(opt, config, config.evaluate.split).string());
  std::vector<RmseReport> reports;
  for (const auto& spec : config.evaluate.predictors) {
    if (spec.kind == PredictorSpec::Kind::kModel) {
      const Checkpoint ckpt = load_checkpoint(resolve(opt, spec.checkpoint).string());
      check_compatible(ckpt, set);
      reports.push_back(evaluate(make_model_predictor(ckpt.model), set.samples, spec.tag));
    } else {
      const int horizon = set.samples.empty() ? config.model.horizon
                                              : static_cast<int>(set.samples.front().future.rows());
      reports.push_back(
          evaluate(make_constant_velocity_predictor(horizon, spec.velocity), set.samples, spec.tag));
    }
  }
  const fs::path dir = fs::path(opt.out) / "eval";
  std::ostringstream table, rmse, plot;
  write_report_table(table, reports);
  write_rmse_csv(rmse, reports);
  write_plot_csv(plot, reports);
  write_text(dir / "report.txt", table.str());
  write_text(dir / "rmse.csv", rmse.str());
  write_text(dir / "plot.csv", plot.str());
  log_event(dir, "evaluate split=" + config.evaluate.split + " samples=" + std::to_string(set.samples.size()));
  std::cout << table.str();
  return kExitOk;
}

int cmd_predict(const Options& opt) {
  const RunConfig config = effective_config(opt, "predict");
  if (config.predict.checkpoint.empty()) throw ConfigError("predict: checkpoint is required");
  const SampleSet set = load_samples(samples_path(opt, config, config.predict.split).string());
  const Checkpoint ckpt = load_checkpoint(resolve(opt, config.predict.checkpoint).string());
  check_compatible(ckpt, set);
  std::vector<std::size_t> ids = config.predict.sample_ids;
  if (ids.empty()) {
    ids.resize(set.samples.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  }
  std::ostringstream out;
  out << "sample_id,dataset_id,vehicle_id,anchor_frame,step,x,y\n";
  for (const std::size_t id : ids) {
    if (id >= set.samples.size()) {
      throw ConfigError("predict: sample id " + std::to_string(id) + " out of range (split has " +
                        std::to_string(set.samples.size()) + " samples)");
    }
    const TrajectorySample& s = set.samples[id];
    const Prediction p = forward(ckpt.model, s);
    for (Index t = 0; t < p.rows(); ++t) {
      out << id << ',' << s.dataset_id << ',' << s.vehicle_id << ',' << s.anchor_frame << ',' << t + 1 << ','
          << format_double(p(t, 0)) << ',' << format_double(p(t, 1)) << '\n';
    }
  }
  write_text(fs::path(opt.out) / "predictions.csv", out.str());
  log_event(opt.out, "predict samples=" + std::to_string(ids.size()));
  return kExitOk;
}

// Reads model_tag,step,rmse rows; steps must run 1..n for every tag.
std::vector<RmseReport> read_rmse_csv(const fs::path& path) {
  std::istringstream in(read_bytes(path));
  std::string line;
  std::getline(in, line);
  if (line != "model_tag,step,rmse") throw RuntimeFailure("'" + path.string() + "' is not an RMSE CSV");
  std::vector<RmseReport> reports;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw RuntimeFailure("malformed row in '" + path.string() + "': " + line);
    }
    const std::string tag = line.substr(0, a);
    const std::size_t step = std::stoul(line.substr(a + 1, b - a - 1));
    const double value = std::stod(line.substr(b + 1));
    if (reports.empty() || reports.back().model_tag != tag) reports.push_back(RmseReport{{}, 0, tag});
    if (step != reports.back().per_step.size() + 1) {
      throw RuntimeFailure("steps out of order in '" + path.string() + "'");
    }
    reports.back().per_step.push_back(value);
  }
  return reports;
}

int cmd_export_plot(const Options& opt) {
  const RunConfig config = effective_config(opt, "export-plot");
  std::vector<std::string> inputs = config.export_plot.inputs;
  if (inputs.empty()) inputs.push_back("eval/rmse.csv");
  std::vector<RmseReport> reports;
  for (const auto& p : inputs) {
    for (auto& r : read_rmse_csv(resolve(opt, p))) reports.push_back(std::move(r));
  }
  if (reports.empty()) throw RuntimeFailure("export-plot: no RMSE rows found");
  for (const auto& r : reports) {
    if (r.per_step.size() != reports.front().per_step.size()) {
      throw RuntimeFailure("export-plot: reports have different horizons");
    }
  }
  std::ostringstream plot;
  write_plot_csv(plot, reports);
  write_text(fs::path(opt.out) / "plot.csv", plot.str());
  log_event(opt.out, "export-plot models=" + std::to_string(reports.size()));
  return kExitOk;
}

int cmd_selfcheck(const Options&) { return run_selfcheck(std::cout) ? kExitOk : kExitRuntime; }

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Hybrid LSTM+Transformer vehicle trajectory prediction"};
  app.require_subcommand(1);
  Options opt;
  std::string unit;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config_path, "Run configuration (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the top-level and command seed");
  app.add_option("--out", opt.out, "Output directory; config paths are relative to it");
  auto* unit_opt =
      app.add_option("--unit", unit, "Length unit of the input CSV")->check(CLI::IsMember({"meters", "feet"}));

  using Command = int (*)(const Options&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"synth", cmd_synth},       {"preprocess", cmd_preprocess},   {"train", cmd_train},
      {"evaluate", cmd_evaluate}, {"predict", cmd_predict},         {"export-plot", cmd_export_plot},
      {"selfcheck", cmd_selfcheck}};
  app.fallthrough();
  for (const auto& [name, fn] : commands) app.add_subcommand(name);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (*seed_opt) opt.seed = seed;
  if (*unit_opt) opt.unit = unit;

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    for (const auto& [n, fn] : commands) {
      if (n == name) return fn(opt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CompatibilityError& e) {
    std::cerr << "incompatible inputs: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace trajpred
