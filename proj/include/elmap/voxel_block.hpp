#pragma once

#include <array>
#include <cassert>

#include <Eigen/Core>

#include "elmap/morton.hpp"

namespace elmap {

/// Aggregate of a block (or node subtree) used for coarse queries. Cells that
/// were never observed contribute a value of 0, so a partially observed
/// region never reports a negative (free) maximum.
struct BlockStats {
  float max_value = 0.0f;
  bool any_observed = false;
  bool all_observed = false;
};

/// Finest octree leaf: an 8x8x8 voxel cube storing data at integration scales
/// 0..3. A cell at scale s covers 2^s voxels per side, so scale 3 is a single
/// cell spanning the whole block. Data is authoritative at current_scale;
/// arrays at coarser scales hold values derived by the pipeline's propagation
/// rule, finer arrays are stale until the block is refined.
template <typename VoxelT>
class VoxelBlock {
 public:
  static constexpr int kSide = 8;       // voxels per side
  static constexpr int kMaxScale = 3;   // one cell per block
  static constexpr int kDepthLevels = 3; // tree levels spanned by a block
  static constexpr int kTotalCells = 512 + 64 + 8 + 1;

  VoxelBlock(const Eigen::Vector3i& base_coord, int scale)
      : base_coord_(base_coord), code_(morton_encode(base_coord)), current_scale_(scale)
  {
    assert(scale >= 0 && scale <= kMaxScale);
  }

  const Eigen::Vector3i& base_coord() const { return base_coord_; }
  MortonCode code() const { return code_; }

  int current_scale() const { return current_scale_; }
  void set_current_scale(int scale) { current_scale_ = scale; }

  int last_frame() const { return last_frame_; }
  void set_last_frame(int frame) { last_frame_ = frame; }

  static constexpr int cells_per_side(int scale) { return kSide >> scale; }

  VoxelT& at(int scale, int cx, int cy, int cz)
  {
    return cells_[cell_index(scale, cx, cy, cz)];
  }
  const VoxelT& at(int scale, int cx, int cy, int cz) const
  {
    return cells_[cell_index(scale, cx, cy, cz)];
  }

  /// Cell at the given scale containing a voxel expressed relative to the
  /// block corner (offsets in [0, 8)).
  VoxelT& cell_containing(int scale, const Eigen::Vector3i& offset)
  {
    return at(scale, offset.x() >> scale, offset.y() >> scale, offset.z() >> scale);
  }
  const VoxelT& cell_containing(int scale, const Eigen::Vector3i& offset) const
  {
    return at(scale, offset.x() >> scale, offset.y() >> scale, offset.z() >> scale);
  }

  void fill(const VoxelT& value)
  {
    cells_.fill(value);
  }

  /// Copies current_scale data into every finer array down to new_scale and
  /// makes new_scale authoritative. No-op unless new_scale is finer.
  void refine_to(int new_scale)
  {
    for (int s = current_scale_; s > new_scale; --s) {
      const int n_fine = cells_per_side(s - 1);
      for (int z = 0; z < n_fine; ++z) {
        for (int y = 0; y < n_fine; ++y) {
          for (int x = 0; x < n_fine; ++x) {
            at(s - 1, x, y, z) = at(s, x >> 1, y >> 1, z >> 1);
          }
        }
      }
    }
    if (new_scale < current_scale_) {
      current_scale_ = new_scale;
    }
  }

  const BlockStats& stats() const { return stats_; }
  BlockStats& stats() { return stats_; }

  static constexpr std::size_t memory_bytes() { return sizeof(VoxelBlock); }

 private:
  static constexpr std::array<int, 5> kScaleOffset = {0, 512, 576, 584, 585};

  static constexpr int cell_index(int scale, int cx, int cy, int cz)
  {
    const int n = cells_per_side(scale);
    assert(cx >= 0 && cx < n && cy >= 0 && cy < n && cz >= 0 && cz < n);
    return kScaleOffset[scale] + (cz * n + cy) * n + cx;
  }

  std::array<VoxelT, kTotalCells> cells_{};
  Eigen::Vector3i base_coord_;
  MortonCode code_;
  int current_scale_ = 0;
  int last_frame_ = -1;
  BlockStats stats_;
};

} // namespace elmap
