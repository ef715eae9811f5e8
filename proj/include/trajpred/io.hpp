#pragma once

// Binary containers for sample splits and model checkpoints.
//
// Both start with an 8-byte magic, a little-endian u32 format version and a
// u32-length-prefixed JSON header, followed by raw little-endian payload.
//
// Samples ("TPSAMPLE", version 1). Header keys: schema_version, split,
// config_hash, data_hash, history_steps, future_steps, grid_channels,
// grid_cells, sample_count. Each sample record:
//   i32 dataset_id, i32 vehicle_id, i32 anchor_frame,
//   u8 has_maneuver, u8 lateral, u8 longitudinal,
//   f64[history_steps*2] target history (row-major x,y),
//   f64[future_steps*2] future,
//   i32 neighbor_count, then per neighbor: i32 channel, i32 cell,
//   i32 vehicle_id, f64[history_steps*2] history.
//
// Checkpoints ("TPCHKPT1", version 1). Header keys: model_config,
// config_hash (of model_config), data_hash, params: [{name, rows, cols}].
// Payload: every parameter's values as f64, column-major, in header order.

#include "trajpred/config.hpp"
#include "trajpred/data_pipeline.hpp"
#include "trajpred/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace trajpred {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kSampleSchemaVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SampleSet {
  std::string split;
  std::string config_hash;  // preprocessing config
  std::string data_hash;    // preprocessing config + input bytes
  std::vector<TrajectorySample> samples;
};

void write_samples(std::ostream& out, const SampleSet& set);
SampleSet read_samples(std::istream& in);
void save_samples(const std::string& path, const SampleSet& set);
SampleSet load_samples(const std::string& path);

struct Checkpoint {
  Model model;
  std::string data_hash;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Throws CompatibilityError when the checkpoint was trained on a different
/// preprocessing run or its shapes cannot consume the samples.
void check_compatible(const Checkpoint& checkpoint, const SampleSet& samples);

}  // namespace trajpred
