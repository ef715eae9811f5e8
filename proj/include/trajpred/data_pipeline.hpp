#pragma once

// Highway vehicle records -> grid-keyed trajectory samples.

#include "trajpred/social_grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajpred {

/// N x 2 rows of (x, y) in meters.
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, 2>;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what), line_(0) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvalidLaneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class WindowUnavailableError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class SplitInfeasibleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RawRecord {
  int dataset_id = 0;
  int vehicle_id = 0;
  int frame_id = 0;
  double local_x = 0.0;  // lateral, meters
  double local_y = 0.0;  // longitudinal, meters
  int lane_id = 1;

  friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

enum class LengthUnit { kMeters, kFeet };

inline constexpr double kFeetToMeters = 0.3048;
inline constexpr int kMaxLane = 6;
inline constexpr double kFrameSeconds = 0.1;

enum class LateralManeuver { kKeep, kLeft, kRight };
enum class LongitudinalManeuver { kNormal, kBraking };

struct ManeuverLabel {
  LateralManeuver lateral = LateralManeuver::kKeep;
  LongitudinalManeuver longitudinal = LongitudinalManeuver::kNormal;

  friend bool operator==(const ManeuverLabel&, const ManeuverLabel&) = default;
};

struct NeighborHistory {
  GridCell cell;
  int vehicle_id = 0;
  Trajectory history;  // relative to the target at the anchor frame
};

struct TrajectorySample {
  Trajectory target_history;  // last row is (0, 0)
  std::vector<NeighborHistory> neighbors;
  OccupancyMask mask;
  Trajectory future;
  int dataset_id = 0;
  int vehicle_id = 0;
  int anchor_frame = 0;
  std::optional<ManeuverLabel> maneuver;
};

struct DatasetSplit {
  std::vector<TrajectorySample> train;
  std::vector<TrajectorySample> validation;
  std::vector<TrajectorySample> test;
};

struct GridGeometry {
  int channels = 3;
  int cells = 13;
  double half_range = 90.0;  // meters ahead and behind

  double cell_length() const { return 2.0 * half_range / cells; }
};

struct SampleConfig {
  int history_steps = 15;
  int future_steps = 5;
  int downsample_factor = 2;
  int maneuver_window = 40;  // raw frames
  double braking_ratio = 0.8;
  GridGeometry grid;
};

/// Reads CSV with header columns dataset_id, vehicle_id, frame_id, local_x,
/// local_y, lane_id (any order, extra columns ignored).
std::vector<RawRecord> parse_records(std::istream& in, LengthUnit unit);
void write_records(std::ostream& out, std::span<const RawRecord> records);

int cap_lane(int lane_id);
/// Caps every lane id in place.
void normalize_lanes(std::vector<RawRecord>& records);

/// Keeps records whose rank in the (frame-sorted) trajectory is a multiple of `factor`.
std::vector<RawRecord> downsample(std::span<const RawRecord> trajectory, int factor);

ManeuverLabel label_maneuver(std::span<const RawRecord> trajectory, std::size_t t_index,
                             int window = 40, double braking_ratio = 0.8);

std::optional<GridCell> grid_cell_index(int delta_lane, double delta_y,
                                        const GridGeometry& grid = {});

/// Samples sorted by (vehicle_id, anchor_frame).
std::vector<TrajectorySample> build_samples(std::span<const RawRecord> records,
                                            const SampleConfig& config = {});

DatasetSplit split_dataset(std::span<const TrajectorySample> samples,
                           std::array<double, 3> ratios = {0.7, 0.1, 0.2}, std::uint64_t seed = 0);

/// Distinct vehicle ids in ascending order.
std::vector<int> vehicle_ids(std::span<const TrajectorySample> samples);

}  // namespace trajpred
