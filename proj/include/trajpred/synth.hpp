#pragma once

#include "trajpred/data_pipeline.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace trajpred {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters of the synthetic highway generator. Frames are 10 Hz.
struct SynthConfig {
  int n_vehicles = 40;
  int n_lanes = 3;
  int duration_frames = 300;
  double speed_min = 20.0;  // m/s
  double speed_max = 30.0;
  double lane_change_prob = 0.0;  // per frame
  int lane_change_frames = 30;
  double curvature_amplitude = 0.0;  // m of lateral sinusoid
  double curvature_period = 200.0;   // frames
  double lane_width = 3.7;
  double spawn_range = 1000.0;  // initial longitudinal offsets drawn from [0, spawn_range)
  // Braking events: start probability per frame, deceleration and length.
  double braking_prob = 0.0;
  double braking_decel = 4.0;  // m/s^2
  int braking_frames = 15;
  // Car following: a vehicle never exceeds its lane leader's speed from
  // `reaction_frames` earlier.
  bool follow_leader = false;
  int reaction_frames = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic record stream ordered by (vehicle_id, frame_id).
std::vector<RawRecord> generate(const SynthConfig& config);

}  // namespace trajpred
