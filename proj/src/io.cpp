#include "trajpred/io.hpp"

#include "trajpred/evaluation.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace trajpred {
namespace {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

constexpr char kSampleMagic[8] = {'T', 'P', 'S', 'A', 'M', 'P', 'L', 'E'};
constexpr char kCheckpointMagic[8] = {'T', 'P', 'C', 'H', 'K', 'P', 'T', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put(const Trajectory& t) {
    for (Index r = 0; r < t.rows(); ++r) {
      put(t(r, 0));
      put(t(r, 1));
    }
  }
  void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void check() {
    if (!out_) throw FormatError("write failed");
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw FormatError("unexpected end of file");
    return v;
  }
  Trajectory trajectory(Index rows) {
    Trajectory t(rows, 2);
    for (Index r = 0; r < rows; ++r) {
      t(r, 0) = get<double>();
      t(r, 1) = get<double>();
    }
    return t;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("unexpected end of file");
    return s;
  }

 private:
  std::istream& in_;
};

void write_preamble(Writer& w, const char (&magic)[8], std::uint32_t version, const Json& header) {
  w.bytes(magic, 8);
  w.put(version);
  const std::string text = header.dump();
  w.put(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
}

Json read_preamble(Reader& r, const char (&magic)[8], std::uint32_t version, const char* what) {
  const std::string m = r.bytes(8);
  if (std::memcmp(m.data(), magic, 8) != 0) throw FormatError(std::string("not a ") + what + " file");
  const auto v = r.get<std::uint32_t>();
  if (v != version) {
    throw FormatError(std::string(what) + " version " + std::to_string(v) + " unsupported (expected " +
                      std::to_string(version) + ")");
  }
  const auto len = r.get<std::uint32_t>();
  try {
    return Json::parse(r.bytes(len));
  } catch (const Json::exception& e) {
    throw FormatError(std::string(what) + " header: " + e.what());
  }
}

}  // namespace

void write_samples(std::ostream& out, const SampleSet& set) {
  int history = 0;
  int future = 0;
  int channels = 3;
  int cells = 13;
  if (!set.samples.empty()) {
    const auto& s0 = set.samples.front();
    history = static_cast<int>(s0.target_history.rows());
    future = static_cast<int>(s0.future.rows());
    channels = s0.mask.channels();
    cells = s0.mask.cells();
  }
  const Json header{{"schema_version", kSampleSchemaVersion},
                    {"split", set.split},
                    {"config_hash", set.config_hash},
                    {"data_hash", set.data_hash},
                    {"history_steps", history},
                    {"future_steps", future},
                    {"grid_channels", channels},
                    {"grid_cells", cells},
                    {"sample_count", set.samples.size()}};
  Writer w(out);
  write_preamble(w, kSampleMagic, kSampleSchemaVersion, header);
  for (const auto& s : set.samples) {
    if (s.target_history.rows() != history || s.future.rows() != future) {
      throw FormatError("samples in one split must share history/future lengths");
    }
    w.put<std::int32_t>(s.dataset_id);
    w.put<std::int32_t>(s.vehicle_id);
    w.put<std::int32_t>(s.anchor_frame);
    w.put<std::uint8_t>(s.maneuver ? 1 : 0);
    w.put<std::uint8_t>(s.maneuver ? static_cast<std::uint8_t>(s.maneuver->lateral) : 0);
    w.put<std::uint8_t>(s.maneuver ? static_cast<std::uint8_t>(s.maneuver->longitudinal) : 0);
    w.put(s.target_history);
    w.put(s.future);
    w.put<std::int32_t>(static_cast<std::int32_t>(s.neighbors.size()));
    for (const auto& n : s.neighbors) {
      w.put<std::int32_t>(n.cell.channel);
      w.put<std::int32_t>(n.cell.cell);
      w.put<std::int32_t>(n.vehicle_id);
      w.put(n.history);
    }
  }
  w.check();
}

SampleSet read_samples(std::istream& in) {
  Reader r(in);
  const Json header = read_preamble(r, kSampleMagic, kSampleSchemaVersion, "sample");
  SampleSet set;
  std::size_t count = 0;
  int history = 0, future = 0, channels = 0, cells = 0;
  try {
    set.split = header.at("split").get<std::string>();
    set.config_hash = header.at("config_hash").get<std::string>();
    set.data_hash = header.at("data_hash").get<std::string>();
    history = header.at("history_steps").get<int>();
    future = header.at("future_steps").get<int>();
    channels = header.at("grid_channels").get<int>();
    cells = header.at("grid_cells").get<int>();
    count = header.at("sample_count").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("sample header: ") + e.what());
  }
  set.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TrajectorySample s;
    s.dataset_id = r.get<std::int32_t>();
    s.vehicle_id = r.get<std::int32_t>();
    s.anchor_frame = r.get<std::int32_t>();
    const auto has = r.get<std::uint8_t>();
    const auto lat = r.get<std::uint8_t>();
    const auto lon = r.get<std::uint8_t>();
    if (has != 0) {
      if (lat > 2 || lon > 1) throw FormatError("invalid maneuver label");
      s.maneuver = ManeuverLabel{static_cast<LateralManeuver>(lat), static_cast<LongitudinalManeuver>(lon)};
    }
    s.target_history = r.trajectory(history);
    s.future = r.trajectory(future);
    const auto n = r.get<std::int32_t>();
    if (n < 0 || n > channels * cells) throw FormatError("invalid neighbor count");
    std::vector<GridCell> grid_cells;
    for (std::int32_t k = 0; k < n; ++k) {
      NeighborHistory nb;
      nb.cell.channel = r.get<std::int32_t>();
      nb.cell.cell = r.get<std::int32_t>();
      nb.vehicle_id = r.get<std::int32_t>();
      nb.history = r.trajectory(history);
      grid_cells.push_back(nb.cell);
      s.neighbors.push_back(std::move(nb));
    }
    s.mask = build_mask(grid_cells, channels, cells);
    set.samples.push_back(std::move(s));
  }
  return set;
}

void save_samples(const std::string& path, const SampleSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_samples(out, set);
}

SampleSet load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_samples(in);
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const ParamStore<double>& params = checkpoint.model.params();
  const Json model_json = to_json(checkpoint.model.config());
  Json entries = Json::array();
  for (ParamId id = 0; id < params.size(); ++id) {
    entries.push_back(
        {{"name", params.name(id)}, {"rows", params.value(id).rows()}, {"cols", params.value(id).cols()}});
  }
  const Json header{{"model_config", model_json},
                    {"config_hash", config_hash(model_json)},
                    {"data_hash", checkpoint.data_hash},
                    {"params", entries}};
  Writer w(out);
  write_preamble(w, kCheckpointMagic, kCheckpointVersion, header);
  for (ParamId id = 0; id < params.size(); ++id) {
    const auto& v = params.value(id);
    w.bytes(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  w.check();
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  const Json header = read_preamble(r, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  ModelConfig config;
  std::string data_hash;
  try {
    config = model_config_from_json(header.at("model_config"));
    if (header.at("config_hash").get<std::string>() != config_hash(header.at("model_config"))) {
      throw FormatError("checkpoint config hash does not match its model config");
    }
    data_hash = header.at("data_hash").get<std::string>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck{Model(config), data_hash};
  ParamStore<double>& params = ck.model.params();
  const Json& entries = header.at("params");
  if (!entries.is_array() || entries.size() != params.size()) {
    throw FormatError("checkpoint parameter list does not match the model layout");
  }
  for (ParamId id = 0; id < params.size(); ++id) {
    const Json& e = entries[id];
    auto& v = params.value(id);
    if (e.at("name").get<std::string>() != params.name(id) || e.at("rows").get<Index>() != v.rows() ||
        e.at("cols").get<Index>() != v.cols()) {
      throw FormatError("checkpoint parameter '" + e.at("name").get<std::string>() +
                        "' does not match the model layout");
    }
  }
  for (ParamId id = 0; id < params.size(); ++id) {
    auto& v = params.value(id);
    const std::string raw = r.bytes(static_cast<std::size_t>(v.size()) * sizeof(double));
    std::memcpy(v.data(), raw.data(), raw.size());
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

void check_compatible(const Checkpoint& checkpoint, const SampleSet& samples) {
  if (checkpoint.data_hash != samples.data_hash) {
    throw CompatibilityError("checkpoint data hash " + checkpoint.data_hash +
                             " does not match dataset data hash " + samples.data_hash);
  }
  const ModelConfig& c = checkpoint.model.config();
  for (const auto& s : samples.samples) {
    if (s.target_history.rows() != c.history_steps || s.future.rows() != c.horizon ||
        s.mask.channels() != c.grid_channels || s.mask.cells() != c.grid_cells) {
      throw CompatibilityError("checkpoint model shape does not match dataset samples");
    }
  }
}

}  // namespace trajpred
