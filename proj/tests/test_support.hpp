#pragma once

#include "trajpred/data_pipeline.hpp"
#include "trajpred/tensor.hpp"

#include <random>
#include <vector>

namespace trajpred::testing {

// A straight, constant-speed track: `frames` raw frames starting at frame 0.
inline std::vector<RawRecord> straight_track(int vehicle_id, int lane, double y0, double step,
                                             int frames, double x = 0.0, int dataset_id = 1) {
  std::vector<RawRecord> out;
  for (int k = 0; k < frames; ++k) {
    out.push_back({dataset_id, vehicle_id, k, x, y0 + step * k, lane});
  }
  return out;
}

inline void append(std::vector<RawRecord>& to, const std::vector<RawRecord>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

inline Matrix<double> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Trajectory random_trajectory(Index rows, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix(rows, 2, rng, scale);
}

}  // namespace trajpred::testing
