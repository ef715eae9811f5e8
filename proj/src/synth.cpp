#include "trajpred/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace trajpred {

void SynthConfig::validate() const {
  if (n_vehicles < 1) throw ConfigError("synth: n_vehicles must be >= 1");
  if (n_lanes < 1) throw ConfigError("synth: n_lanes must be >= 1");
  if (n_lanes > kMaxLane) {
    throw ConfigError("synth: n_lanes " + std::to_string(n_lanes) + " exceeds the lane cap of " +
                      std::to_string(kMaxLane));
  }
  if (duration_frames < 1) throw ConfigError("synth: duration_frames must be >= 1");
  if (!(speed_min > 0.0) || !(speed_max >= speed_min)) {
    throw ConfigError("synth: speed range must be positive and ordered");
  }
  if (!(lane_change_prob >= 0.0 && lane_change_prob <= 1.0)) {
    throw ConfigError("synth: lane_change_prob must be in [0, 1]");
  }
  if (!(braking_prob >= 0.0 && braking_prob <= 1.0)) {
    throw ConfigError("synth: braking_prob must be in [0, 1]");
  }
  if (lane_change_frames < 1 || braking_frames < 0 || reaction_frames < 0) {
    throw ConfigError("synth: frame counts must be non-negative");
  }
  if (!(curvature_period > 0.0) || !(spawn_range >= 0.0) || !(lane_width > 0.0)) {
    throw ConfigError("synth: curvature_period, spawn_range and lane_width must be positive");
  }
}

namespace {

struct Vehicle {
  int id = 0;
  int lane = 1;
  double y0 = 0.0;
  double base_speed = 0.0;
  double phase = 0.0;
  std::vector<double> speed;  // per frame
};

}  // namespace

std::vector<RawRecord> generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int frames = config.duration_frames;
  constexpr double dt = kFrameSeconds;

  std::vector<Vehicle> vehicles(static_cast<std::size_t>(config.n_vehicles));
  for (int v = 0; v < config.n_vehicles; ++v) {
    Vehicle& veh = vehicles[static_cast<std::size_t>(v)];
    veh.id = v + 1;
    veh.lane = 1 + std::min(config.n_lanes - 1, static_cast<int>(unit(rng) * config.n_lanes));
    veh.y0 = std::floor(unit(rng) * config.spawn_range);
    veh.base_speed = config.speed_min + unit(rng) * (config.speed_max - config.speed_min);
    veh.phase = unit(rng) * config.curvature_period;
  }

  // Own speed profiles with braking events: decelerate for braking_frames,
  // then recover at the same rate.
  for (Vehicle& veh : vehicles) {
    veh.speed.assign(static_cast<std::size_t>(frames), veh.base_speed);
    if (config.braking_prob <= 0.0) continue;
    double speed = veh.base_speed;
    int braking_left = 0;
    for (int k = 0; k < frames; ++k) {
      if (braking_left == 0 && speed >= veh.base_speed && unit(rng) < config.braking_prob) {
        braking_left = config.braking_frames;
      }
      if (braking_left > 0) {
        speed = std::max(0.3 * veh.base_speed, speed - config.braking_decel * dt);
        --braking_left;
      } else {
        speed = std::min(veh.base_speed, speed + config.braking_decel * dt);
      }
      veh.speed[static_cast<std::size_t>(k)] = speed;
    }
  }

  if (config.follow_leader) {
    // Front to back within each starting lane.
    std::vector<std::size_t> order(vehicles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (vehicles[a].lane != vehicles[b].lane) return vehicles[a].lane < vehicles[b].lane;
      if (vehicles[a].y0 != vehicles[b].y0) return vehicles[a].y0 > vehicles[b].y0;
      return vehicles[a].id < vehicles[b].id;
    });
    for (std::size_t j = 1; j < order.size(); ++j) {
      const Vehicle& leader = vehicles[order[j - 1]];
      Vehicle& follower = vehicles[order[j]];
      if (leader.lane != follower.lane) continue;
      for (int k = 0; k < frames; ++k) {
        const int src = k - config.reaction_frames;
        const double lead = src >= 0 ? leader.speed[static_cast<std::size_t>(src)] : leader.base_speed;
        double& own = follower.speed[static_cast<std::size_t>(k)];
        own = std::min(own, lead);
      }
    }
  }

  std::vector<RawRecord> records;
  records.reserve(vehicles.size() * static_cast<std::size_t>(frames));
  for (const Vehicle& veh : vehicles) {
    int lane = veh.lane;
    double x_from = (lane - 0.5) * config.lane_width;
    double x_to = x_from;
    int change_left = 0;
    double y = veh.y0;
    for (int k = 0; k < frames; ++k) {
      if (change_left == 0 && config.lane_change_prob > 0.0 && unit(rng) < config.lane_change_prob) {
        int target = lane + (unit(rng) < 0.5 ? -1 : 1);
        if (target < 1 || target > config.n_lanes) target = lane + (lane == 1 ? 1 : -1);
        if (target >= 1 && target <= config.n_lanes && target != lane) {
          x_from = (lane - 0.5) * config.lane_width;
          x_to = (target - 0.5) * config.lane_width;
          lane = target;
          change_left = config.lane_change_frames;
        }
      }
      double x = x_to;
      if (change_left > 0) {
        const double progress =
            1.0 - static_cast<double>(change_left - 1) / static_cast<double>(config.lane_change_frames);
        x = x_from + (x_to - x_from) * progress;
        --change_left;
      }
      if (config.curvature_amplitude != 0.0) {
        x += config.curvature_amplitude *
             std::sin(2.0 * std::numbers::pi * (k + veh.phase) / config.curvature_period);
      }
      records.push_back(RawRecord{1, veh.id, k, x, y, lane});
      y += veh.speed[static_cast<std::size_t>(k)] * dt;
    }
  }
  return records;
}

}  // namespace trajpred
