#include "trajpred/social_grid.hpp"

#include "trajpred/data_pipeline.hpp"

#include <numeric>
#include <string>

namespace trajpred {

OccupancyMask::OccupancyMask(int channels, int cells)
    : channels_(channels), cells_(cells), bits_(static_cast<std::size_t>(channels * cells), 0) {
  if (channels <= 0 || cells <= 0) throw std::invalid_argument("occupancy grid must be non-empty");
}

std::size_t OccupancyMask::offset(int channel, int cell) const {
  if (channel < 0 || channel >= channels_ || cell < 0 || cell >= cells_) {
    throw IntegrityError("grid cell (" + std::to_string(channel) + ", " + std::to_string(cell) +
                         ") outside " + std::to_string(channels_) + "x" + std::to_string(cells_) +
                         " grid");
  }
  return static_cast<std::size_t>(channel * cells_ + cell);
}

bool OccupancyMask::test(int channel, int cell) const { return bits_[offset(channel, cell)] != 0; }

void OccupancyMask::set(GridCell c) {
  if (c == target_cell()) {
    throw IntegrityError("grid cell (" + std::to_string(c.channel) + ", " + std::to_string(c.cell) +
                         ") is the target's own cell");
  }
  bits_[offset(c.channel, c.cell)] = 1;
}

void OccupancyMask::reset(GridCell c) { bits_[offset(c.channel, c.cell)] = 0; }

int OccupancyMask::count() const { return std::accumulate(bits_.begin(), bits_.end(), 0); }

std::vector<GridCell> OccupancyMask::occupied() const {
  std::vector<GridCell> out;
  for (int c = 0; c < channels_; ++c) {
    for (int g = 0; g < cells_; ++g) {
      if (test(c, g)) out.push_back({c, g});
    }
  }
  return out;
}

OccupancyMask build_mask(std::span<const GridCell> cells, int channels, int cells_per_channel) {
  OccupancyMask mask(channels, cells_per_channel);
  for (const GridCell& c : cells) {
    if (mask.test(c)) {
      throw IntegrityError("duplicate neighbor at grid cell (" + std::to_string(c.channel) + ", " +
                           std::to_string(c.cell) + ")");
    }
    mask.set(c);
  }
  return mask;
}

OccupancyMask build_mask(const TrajectorySample& sample) {
  std::vector<GridCell> cells;
  cells.reserve(sample.neighbors.size());
  for (const auto& n : sample.neighbors) cells.push_back(n.cell);
  return build_mask(cells, sample.mask.channels(), sample.mask.cells());
}

SocialEncoding masked_scatter(const OccupancyMask& mask, std::span<const GridCell> cells,
                              const Matrix<double>& encodings) {
  if (static_cast<Index>(cells.size()) != encodings.rows() ||
      static_cast<int>(cells.size()) != mask.count()) {
    throw ShapeError("masked_scatter: " + std::to_string(encodings.rows()) + " encodings for " +
                     std::to_string(mask.count()) + " occupied cells");
  }
  SocialEncoding grid = SocialEncoding::Zero(mask.channels() * mask.cells(), encodings.cols());
  std::vector<bool> written(static_cast<std::size_t>(grid.rows()), false);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!mask.test(cells[i])) {
      throw IntegrityError("masked_scatter: neighbor cell not present in mask");
    }
    const auto row = static_cast<std::size_t>(cells[i].channel * mask.cells() + cells[i].cell);
    if (written[row]) throw IntegrityError("masked_scatter: duplicate neighbor cell");
    written[row] = true;
    grid.row(cells[i].channel * mask.cells() + cells[i].cell) = encodings.row(static_cast<Index>(i));
  }
  return grid;
}

Matrix<double> masked_gather(const SocialEncoding& grid, int cells_per_channel,
                             std::span<const GridCell> cells) {
  Matrix<double> out(static_cast<Index>(cells.size()), grid.cols());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out.row(static_cast<Index>(i)) = grid.row(cells[i].channel * cells_per_channel + cells[i].cell);
  }
  return out;
}

Vector<double> flatten_social(const SocialEncoding& grid) {
  Vector<double> flat(grid.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), grid.rows(), grid.cols()) = grid;
  return flat;
}

SocialEncoding unflatten_social(const Vector<double>& flat, Index rows, Index dim) {
  if (flat.size() != rows * dim) throw ShapeError("unflatten_social: size mismatch");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, dim);
}

}  // namespace trajpred
