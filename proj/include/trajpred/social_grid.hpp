#pragma once

#include "trajpred/tensor.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace trajpred {

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridCell {
  int channel = 0;  // lane offset + 1
  int cell = 0;     // longitudinal cell

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Binary neighbor-presence grid of `channels` lane directions by `cells`
/// longitudinal cells. The target's own cell (middle channel, middle cell)
/// can never be set.
class OccupancyMask {
 public:
  OccupancyMask() : OccupancyMask(3, 13) {}
  OccupancyMask(int channels, int cells);

  int channels() const { return channels_; }
  int cells() const { return cells_; }
  GridCell target_cell() const { return {channels_ / 2, cells_ / 2}; }

  bool test(int channel, int cell) const;
  bool test(GridCell c) const { return test(c.channel, c.cell); }
  void set(GridCell c);
  void reset(GridCell c);

  int count() const;
  /// Set cells in (channel, cell) row-major order.
  std::vector<GridCell> occupied() const;

  friend bool operator==(const OccupancyMask&, const OccupancyMask&) = default;

 private:
  std::size_t offset(int channel, int cell) const;

  int channels_;
  int cells_;
  std::vector<std::uint8_t> bits_;
};

struct TrajectorySample;

/// Presence mask for a sample's neighbor list.
OccupancyMask build_mask(const TrajectorySample& sample);
OccupancyMask build_mask(std::span<const GridCell> cells, int channels, int cells_per_channel);

/// Grid of neighbor encodings, (channels*cells) x d with row channel*cells + cell.
using SocialEncoding = Matrix<double>;

/// Writes row i of `encodings` to the grid row of `cells[i]`; every other
/// row is zero. `cells` must list exactly the set bits of `mask`.
SocialEncoding masked_scatter(const OccupancyMask& mask, std::span<const GridCell> cells,
                              const Matrix<double>& encodings);

/// Adjoint of masked_scatter: row i of the result is the grid row of cells[i].
Matrix<double> masked_gather(const SocialEncoding& grid, int cells_per_channel,
                             std::span<const GridCell> cells);

/// Row-major (channel, cell, feature) flattening.
Vector<double> flatten_social(const SocialEncoding& grid);
SocialEncoding unflatten_social(const Vector<double>& flat, Index rows, Index dim);

}  // namespace trajpred
