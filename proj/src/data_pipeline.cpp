#include "trajpred/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

namespace trajpred {
namespace {

constexpr std::array<std::string_view, 6> kColumns = {"dataset_id", "vehicle_id", "frame_id",
                                                      "local_x",    "local_y",    "lane_id"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, std::string_view column, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("malformed " + std::string(column) + " value '" + std::string(text) + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ParseError("non-finite " + std::string(column) + " value", line);
    }
  }
  return value;
}

struct VehicleKey {
  int dataset_id;
  int vehicle_id;
  auto operator<=>(const VehicleKey&) const = default;
};

// Frame-sorted raw track of one vehicle.
struct Track {
  VehicleKey key;
  std::vector<RawRecord> records;

  // Index of the record at `frame`, if present.
  std::optional<std::size_t> find(int frame) const {
    auto it = std::lower_bound(records.begin(), records.end(), frame,
                               [](const RawRecord& r, int f) { return r.frame_id < f; });
    if (it == records.end() || it->frame_id != frame) return std::nullopt;
    return static_cast<std::size_t>(it - records.begin());
  }
};

double window_speed(std::span<const RawRecord> trajectory, std::size_t from, std::size_t to) {
  const double dt = (trajectory[to].frame_id - trajectory[from].frame_id) * kFrameSeconds;
  return std::abs(trajectory[to].local_y - trajectory[from].local_y) / dt;
}

}  // namespace

std::vector<RawRecord> parse_records(std::istream& in, LengthUnit unit) {
  std::string line;
  std::size_t line_no = 0;
  std::array<std::size_t, kColumns.size()> position{};
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError("missing CSV header");
  {
    const auto header = split_csv(line);
    width = header.size();
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      auto it = std::find(header.begin(), header.end(), kColumns[c]);
      if (it == header.end()) {
        throw ParseError("missing column '" + std::string(kColumns[c]) + "'", line_no);
      }
      position[c] = static_cast<std::size_t>(it - header.begin());
    }
  }

  const double scale = unit == LengthUnit::kFeet ? kFeetToMeters : 1.0;
  std::vector<RawRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    RawRecord r;
    r.dataset_id = parse_field<int>(fields[position[0]], kColumns[0], line_no);
    r.vehicle_id = parse_field<int>(fields[position[1]], kColumns[1], line_no);
    r.frame_id = parse_field<int>(fields[position[2]], kColumns[2], line_no);
    r.local_x = parse_field<double>(fields[position[3]], kColumns[3], line_no) * scale;
    r.local_y = parse_field<double>(fields[position[4]], kColumns[4], line_no) * scale;
    r.lane_id = parse_field<int>(fields[position[5]], kColumns[5], line_no);
    records.push_back(r);
  }
  return records;
}

void write_records(std::ostream& out, std::span<const RawRecord> records) {
  out << "dataset_id,vehicle_id,frame_id,local_x,local_y,lane_id\n";
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
  };
  for (const RawRecord& r : records) {
    out << r.dataset_id << ',' << r.vehicle_id << ',' << r.frame_id << ',';
    put(r.local_x);
    out << ',';
    put(r.local_y);
    out << ',' << r.lane_id << '\n';
  }
}

int cap_lane(int lane_id) {
  if (lane_id < 1) throw InvalidLaneError("invalid lane id " + std::to_string(lane_id));
  return std::min(lane_id, kMaxLane);
}

void normalize_lanes(std::vector<RawRecord>& records) {
  for (RawRecord& r : records) r.lane_id = cap_lane(r.lane_id);
}

std::vector<RawRecord> downsample(std::span<const RawRecord> trajectory, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < trajectory.size(); i += static_cast<std::size_t>(factor)) {
    out.push_back(trajectory[i]);
  }
  return out;
}

ManeuverLabel label_maneuver(std::span<const RawRecord> trajectory, std::size_t t_index,
                             int window, double braking_ratio) {
  const auto w = static_cast<std::size_t>(window);
  if (t_index < w || t_index + w >= trajectory.size()) {
    throw WindowUnavailableError("maneuver windows of " + std::to_string(window) +
                                 " frames unavailable at index " + std::to_string(t_index));
  }
  const int before = trajectory[t_index - w].lane_id;
  const int now = trajectory[t_index].lane_id;
  const int after = trajectory[t_index + w].lane_id;

  ManeuverLabel label;
  if (after < now || now < before) {
    label.lateral = LateralManeuver::kLeft;
  } else if (after > now || now > before) {
    label.lateral = LateralManeuver::kRight;
  }
  const double past = window_speed(trajectory, t_index - w, t_index);
  const double future = window_speed(trajectory, t_index, t_index + w);
  if (future < braking_ratio * past) label.longitudinal = LongitudinalManeuver::kBraking;
  return label;
}

std::optional<GridCell> grid_cell_index(int delta_lane, double delta_y, const GridGeometry& grid) {
  const int half_channels = grid.channels / 2;
  if (std::abs(delta_lane) > half_channels) return std::nullopt;
  if (!(delta_y >= -grid.half_range && delta_y < grid.half_range)) return std::nullopt;
  int g = static_cast<int>(std::floor((delta_y + grid.half_range) / grid.cell_length()));
  g = std::clamp(g, 0, grid.cells - 1);
  return GridCell{delta_lane + half_channels, g};
}

std::vector<TrajectorySample> build_samples(std::span<const RawRecord> records,
                                            const SampleConfig& config) {
  const int T = config.history_steps;
  const int F = config.future_steps;
  const int factor = config.downsample_factor;
  if (T < 1 || F < 1 || factor < 1) throw std::invalid_argument("invalid sample configuration");

  // Tracks keyed by (dataset, vehicle), each sorted by frame.
  std::map<VehicleKey, Track> tracks;
  for (const RawRecord& r : records) {
    auto& t = tracks[VehicleKey{r.dataset_id, r.vehicle_id}];
    t.key = VehicleKey{r.dataset_id, r.vehicle_id};
    t.records.push_back(r);
  }
  for (auto& [key, t] : tracks) {
    std::sort(t.records.begin(), t.records.end(),
              [](const RawRecord& a, const RawRecord& b) { return a.frame_id < b.frame_id; });
    for (std::size_t i = 1; i < t.records.size(); ++i) {
      if (t.records[i].frame_id == t.records[i - 1].frame_id) {
        throw IntegrityError("duplicate record for dataset " + std::to_string(key.dataset_id) +
                             ", vehicle " + std::to_string(key.vehicle_id) + ", frame " +
                             std::to_string(t.records[i].frame_id));
      }
    }
  }

  // Who is on the road at each (dataset, frame).
  std::map<std::pair<int, int>, std::vector<const Track*>> present;
  for (const auto& [key, t] : tracks) {
    for (const RawRecord& r : t.records) present[{key.dataset_id, r.frame_id}].push_back(&t);
  }

  std::vector<TrajectorySample> samples;
  for (const auto& [key, track] : tracks) {
    const auto& raw = track.records;
    // Rank-downsampled indices into the raw track.
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < raw.size(); i += static_cast<std::size_t>(factor)) kept.push_back(i);
    if (static_cast<int>(kept.size()) < T + F) continue;

    for (std::size_t a = static_cast<std::size_t>(T - 1); a + static_cast<std::size_t>(F) < kept.size();
         ++a) {
      const RawRecord& anchor = raw[kept[a]];
      // Windows must be evenly spaced in time.
      bool contiguous = true;
      for (int k = -(T - 1); k <= F && contiguous; ++k) {
        contiguous = raw[kept[a + k]].frame_id == anchor.frame_id + k * factor;
      }
      if (!contiguous) continue;

      TrajectorySample s;
      s.dataset_id = key.dataset_id;
      s.vehicle_id = key.vehicle_id;
      s.anchor_frame = anchor.frame_id;
      s.mask = OccupancyMask(config.grid.channels, config.grid.cells);
      s.target_history.resize(T, 2);
      for (int k = 0; k < T; ++k) {
        const RawRecord& r = raw[kept[a - (T - 1) + k]];
        s.target_history.row(k) << r.local_x - anchor.local_x, r.local_y - anchor.local_y;
      }
      s.future.resize(F, 2);
      for (int k = 0; k < F; ++k) {
        const RawRecord& r = raw[kept[a + 1 + k]];
        s.future.row(k) << r.local_x - anchor.local_x, r.local_y - anchor.local_y;
      }
      if (kept[a] >= static_cast<std::size_t>(config.maneuver_window) &&
          kept[a] + static_cast<std::size_t>(config.maneuver_window) < raw.size()) {
        s.maneuver = label_maneuver(raw, kept[a], config.maneuver_window, config.braking_ratio);
      }

      // Closest vehicle per cell; ties go to the lower vehicle id.
      struct Candidate {
        const Track* track;
        double distance;
      };
      std::map<std::pair<int, int>, Candidate> best;
      const GridCell own = s.mask.target_cell();
      for (const Track* other : present[{key.dataset_id, anchor.frame_id}]) {
        if (other == &track) continue;
        const RawRecord& o = other->records[*other->find(anchor.frame_id)];
        const auto cell = grid_cell_index(o.lane_id - anchor.lane_id, o.local_y - anchor.local_y,
                                          config.grid);
        if (!cell || *cell == own) continue;
        const double dist = std::abs(o.local_y - anchor.local_y);
        auto [it, inserted] = best.try_emplace({cell->channel, cell->cell}, Candidate{other, dist});
        if (!inserted) {
          const Candidate& cur = it->second;
          if (dist < cur.distance ||
              (dist == cur.distance && other->key.vehicle_id < cur.track->key.vehicle_id)) {
            it->second = Candidate{other, dist};
          }
        }
      }
      for (const auto& [cell_key, cand] : best) {
        NeighborHistory n;
        n.cell = GridCell{cell_key.first, cell_key.second};
        n.vehicle_id = cand.track->key.vehicle_id;
        n.history.resize(T, 2);
        bool complete = true;
        for (int k = 0; k < T && complete; ++k) {
          const auto idx = cand.track->find(anchor.frame_id - (T - 1 - k) * factor);
          if (!idx) {
            complete = false;
            break;
          }
          const RawRecord& r = cand.track->records[*idx];
          n.history.row(k) << r.local_x - anchor.local_x, r.local_y - anchor.local_y;
        }
        if (!complete) continue;
        s.mask.set(n.cell);
        s.neighbors.push_back(std::move(n));
      }
      samples.push_back(std::move(s));
    }
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const TrajectorySample& x, const TrajectorySample& y) {
                     return std::tie(x.vehicle_id, x.anchor_frame, x.dataset_id) <
                            std::tie(y.vehicle_id, y.anchor_frame, y.dataset_id);
                   });
  return samples;
}

std::vector<int> vehicle_ids(std::span<const TrajectorySample> samples) {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.vehicle_id);
  return {ids.begin(), ids.end()};
}

DatasetSplit split_dataset(std::span<const TrajectorySample> samples, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }
  std::vector<int> ids = vehicle_ids(samples);
  if (ids.size() < 3) {
    throw SplitInfeasibleError("need at least 3 distinct vehicles to split, found " +
                               std::to_string(ids.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const double n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9));
  std::map<int, int> bucket;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    bucket[ids[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }

  DatasetSplit split;
  for (const auto& s : samples) {
    switch (bucket[s.vehicle_id]) {
      case 0: split.train.push_back(s); break;
      case 1: split.validation.push_back(s); break;
      default: split.test.push_back(s); break;
    }
  }
  return split;
}

}  // namespace trajpred
