#pragma once

// Submap-fusion core: every observed data unit of the source tree (block
// cells at their current scale, unexpanded node cubes decomposed to
// block-sized units) is transformed into the target frame and combined into
// the target cell of matching scale by nearest-cell assignment. Target blocks
// coarser than an incoming unit are refined first; finer target cells inside
// the unit's footprint each receive the unit's value.

#include <algorithm>
#include <unordered_set>

#include <Eigen/Geometry>

#include "elmap/octree.hpp"

namespace elmap::detail {

template <typename VoxelT, typename Combine, typename Refresh, typename SlotWritable>
class TreeFuser {
 public:
  using Tree = Octree<VoxelT>;
  using Block = VoxelBlock<VoxelT>;
  using Node = OctreeNode<VoxelT>;

  /// slot_writable(v): block-sized units for which v may be stored on an
  /// empty node slot instead of allocating a block (occupancy free space;
  /// never TSDF, whose export reads blocks only).
  TreeFuser(Tree& target, const Eigen::Isometry3f& T_target_from_source, Combine combine,
            Refresh refresh, SlotWritable slot_writable)
      : target_(target), T_ts_(T_target_from_source), combine_(combine), refresh_(refresh),
        slot_writable_(slot_writable)
  {
  }

  void run(const Tree& source)
  {
    walk(source, source.root(), 0, Eigen::Vector3i::Zero());
    for (Block* block : touched_) {
      refresh_(*block);
    }
  }

  long skipped_out_of_bounds() const { return skipped_; }

 private:
  void walk(const Tree& source, const Node* node, int depth, const Eigen::Vector3i& base)
  {
    const int child_side = source.voxels_per_side() >> (depth + 1);
    for (int slot = 0; slot < 8; ++slot) {
      const Eigen::Vector3i child_base =
          base + child_side * Eigen::Vector3i(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1);
      if (node->child_block[slot] != nullptr) {
        write_block(source, *node->child_block[slot]);
      } else if (node->child_node[slot] != nullptr) {
        walk(source, node->child_node[slot], depth + 1, child_base);
      } else if (node->child_data[slot].is_observed()) {
        write_cube(source, child_base, child_side, node->child_data[slot]);
      }
    }
  }

  void write_block(const Tree& source, const Block& block)
  {
    const int s = block.current_scale();
    const int n = Block::cells_per_side(s);
    const int stride = 1 << s;
    for (int z = 0; z < n; ++z) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const VoxelT& cell = block.at(s, x, y, z);
          if (!cell.is_observed()) {
            continue;
          }
          const Eigen::Vector3i voxel = block.base_coord() + stride * Eigen::Vector3i(x, y, z);
          write_unit(source.cell_centre(voxel, s), s, cell);
        }
      }
    }
  }

  // Uniform cubes are emitted as one unit per block volume they cover.
  void write_cube(const Tree& source, const Eigen::Vector3i& base, int side, const VoxelT& data)
  {
    for (int z = 0; z < side; z += Block::kSide) {
      for (int y = 0; y < side; y += Block::kSide) {
        for (int x = 0; x < side; x += Block::kSide) {
          write_unit(source.cell_centre(base + Eigen::Vector3i(x, y, z), Block::kMaxScale),
                     Block::kMaxScale, data);
        }
      }
    }
  }

  void write_unit(const Eigen::Vector3f& centre_source, int scale, const VoxelT& data)
  {
    const Eigen::Vector3f p = T_ts_ * centre_source;
    if (!target_.contains(p)) {
      ++skipped_;
      return;
    }
    const Eigen::Vector3i voxel = target_.voxel_of(p);
    Block* block = target_.fetch_block(voxel);
    if (block == nullptr && scale == Block::kMaxScale && slot_writable_(data)) {
      // Whole-block unit onto untouched space: keep it at the node slot.
      Node* parent = target_.block_parent(voxel);
      const int slot = target_.child_index(voxel, target_.block_depth() - 1);
      if (parent->child_block[slot] == nullptr) {
        parent->child_data[slot] = combine_(parent->child_data[slot], data);
        return;
      }
      block = parent->child_block[slot];
    }
    if (block == nullptr) {
      block = target_.allocate_block(voxel, scale);
    } else if (block->current_scale() > scale) {
      block->refine_to(scale);
    }
    const int s_t = block->current_scale();
    // Aligned cell of the unit's scale containing p, then every target cell
    // of the (finer or equal) authoritative scale inside it.
    const Eigen::Vector3i rel = voxel - block->base_coord();
    const Eigen::Vector3i unit_base((rel.x() >> scale) << scale, (rel.y() >> scale) << scale,
                                    (rel.z() >> scale) << scale);
    const int span = 1 << std::max(0, scale - s_t);
    const Eigen::Vector3i cell0(unit_base.x() >> s_t, unit_base.y() >> s_t, unit_base.z() >> s_t);
    for (int z = 0; z < span; ++z) {
      for (int y = 0; y < span; ++y) {
        for (int x = 0; x < span; ++x) {
          VoxelT& cell = block->at(s_t, cell0.x() + x, cell0.y() + y, cell0.z() + z);
          cell = combine_(cell, data);
        }
      }
    }
    touched_.insert(block);
  }

  Tree& target_;
  Eigen::Isometry3f T_ts_;
  Combine combine_;
  Refresh refresh_;
  SlotWritable slot_writable_;
  std::unordered_set<Block*> touched_;
  long skipped_ = 0;
};

template <typename VoxelT, typename Combine, typename Refresh, typename SlotWritable>
TreeFuser(Octree<VoxelT>&, const Eigen::Isometry3f&, Combine, Refresh, SlotWritable)
    -> TreeFuser<VoxelT, Combine, Refresh, SlotWritable>;

} // namespace elmap::detail
