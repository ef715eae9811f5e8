#pragma once

#include "trajpred/data_pipeline.hpp"
#include "trajpred/gradcheck.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace trajpred {

struct CheckOutcome {
  std::string name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string worst_parameter;
};

/// Gradient checks for every differentiable op plus the tiny-config model and
/// loss, in double precision.
std::vector<CheckOutcome> gradient_suite(std::uint64_t seed = 7);

/// Random masks and encodings scattered and compared with a per-cell loop.
/// Returns the number of mismatching cases.
int scatter_oracle_mismatches(int cases, std::uint64_t seed = 11);

/// A random sample for a tiny-config model: history/future lengths and grid
/// shape as given, with `neighbors` occupied cells.
TrajectorySample random_tiny_sample(int history_steps, int horizon, int channels, int cells,
                                    int neighbors, std::uint64_t seed);

/// Runs both suites, logging one line per check. True when all pass.
bool run_selfcheck(std::ostream& log);

}  // namespace trajpred
