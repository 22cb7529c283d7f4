#pragma once

// Shared projective scan-integration core for the two pipelines. The tree is
// walked once from the root: every child cube is classified against the depth
// image (skip / fully free / descend). Structure is created serially during
// the walk; per-block cell updates then run in parallel over disjoint blocks;
// freshly allocated blocks that received no update are pruned afterwards.

#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Geometry>

#include "elmap/octree.hpp"
#include "elmap/projective.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap::detail {

template <typename Policy>
class ProjectiveIntegrator {
 public:
  using Voxel = typename Policy::Voxel;
  using Tree = Octree<Voxel>;
  using Block = VoxelBlock<Voxel>;
  using Node = OctreeNode<Voxel>;

  ProjectiveIntegrator(Policy policy, const SphericalSensorModel& model)
      : policy_(policy), model_(model)
  {
  }

  IntegrationStats integrate(Tree& tree,
                             const DepthImage& depth,
                             const Eigen::Isometry3f& T_map_from_sensor,
                             int frame)
  {
    const auto t_start = std::chrono::steady_clock::now();
    if (depth.width() != model_.width() || depth.height() != model_.height()) {
      throw std::invalid_argument("integrate: depth image does not match sensor model");
    }
    require_rigid(T_map_from_sensor, "integrate");

    IntegrationStats stats;
    const Eigen::Isometry3f T_LS = T_map_from_sensor.inverse();
    const CubeClassifier classifier(model_, depth, T_LS, policy_.behind_margin(),
                                    policy_.front_margin(), Policy::kTracksFreeSpace);
    count_rays(depth, T_map_from_sensor, tree, stats);

    tree_ = &tree;
    depth_ = &depth;
    T_LS_ = T_LS;
    frame_ = frame;
    jobs_.clear();

    descend(classifier, tree.root(), 0, Eigen::Vector3i::Zero(), stats);

    // Parallel phase: blocks are disjoint, tree structure is frozen.
    std::vector<IntegrationStats> job_stats(jobs_.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < static_cast<long>(jobs_.size()); ++i) {
      update_block(jobs_[i], job_stats[i]);
    }
    for (std::size_t i = 0; i < jobs_.size(); ++i) {
      const BlockJob& job = jobs_[i];
      if (job.fresh && !job.any_update) {
        tree.remove_block(job.parent, job.slot);
        continue;
      }
      if (job.any_update) {
        ++stats.blocks_touched;
        if (job.fresh) {
          ++stats.blocks_allocated;
        }
        for (int s = 0; s < 4; ++s) {
          stats.cells_updated[s] += job_stats[i].cells_updated[s];
        }
      }
    }
    policy_.after_integration(tree);

    stats.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    return stats;
  }

 private:
  struct BlockJob {
    Node* parent = nullptr;
    int slot = 0;
    Block* block = nullptr;
    bool fresh = false;
    bool any_update = false;
  };

  void count_rays(const DepthImage& depth, const Eigen::Isometry3f& T_map_from_sensor,
                  const Tree& tree, IntegrationStats& stats) const
  {
    for (int row = 0; row < depth.height(); ++row) {
      for (int col = 0; col < depth.width(); ++col) {
        switch (depth.state(row, col)) {
          case PixelState::kInvalid:
            ++stats.rays_invalid;
            break;
          case PixelState::kClamped:
            ++stats.rays_clamped;
            break;
          case PixelState::kValid: {
            ++stats.rays_valid;
            const Eigen::Vector3f surface =
                T_map_from_sensor * model_.backproject(row, col, depth.depth(row, col));
            if (!tree.contains(surface)) {
              ++stats.rays_surface_out_of_bounds;
            }
            break;
          }
        }
      }
    }
  }

  void descend(const CubeClassifier& classifier, Node* node, int depth_level,
               const Eigen::Vector3i& base, IntegrationStats& stats)
  {
    Tree& tree = *tree_;
    const int child_side = tree.voxels_per_side() >> (depth_level + 1);
    const float child_side_m = static_cast<float>(child_side) * tree.voxel_dim();
    for (int slot = 0; slot < 8; ++slot) {
      const Eigen::Vector3i child_base =
          base + child_side * Eigen::Vector3i(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1);
      const Eigen::Vector3f centre =
          tree.origin() + tree.voxel_dim() * child_base.cast<float>() +
          Eigen::Vector3f::Constant(0.5f * child_side_m);
      switch (classifier.classify(centre, 0.5f * child_side_m)) {
        case CubeAction::kSkip:
          break;
        case CubeAction::kFullyFree:
          apply_free_slot(node, slot, stats);
          break;
        case CubeAction::kDescend:
          if (child_side == Block::kSide) {
            BlockJob job;
            job.parent = node;
            job.slot = slot;
            job.block = node->child_block[slot];
            if (job.block == nullptr) {
              job.block = tree.allocate_block(child_base, block_scale(child_base));
              job.fresh = true;
            }
            jobs_.push_back(job);
          } else {
            if (node->child_node[slot] == nullptr) {
              tree.expand_slot(node, slot);
            }
            descend(classifier, node->child_node[slot], depth_level + 1, child_base, stats);
          }
          break;
      }
    }
  }

  // Free updates reach whole unexpanded cubes in O(1); existing finer
  // structure below the cube receives the same constant per cell.
  void apply_free_slot(Node* node, int slot, IntegrationStats& stats)
  {
    if (node->child_block[slot] != nullptr) {
      Block& block = *node->child_block[slot];
      const int s = block.current_scale();
      const int n = Block::cells_per_side(s);
      for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
          for (int x = 0; x < n; ++x) {
            policy_.apply_free(block.at(s, x, y, z));
          }
        }
      }
      stats.cells_updated[s] += static_cast<long>(n) * n * n;
      ++stats.blocks_touched;
      block.set_last_frame(frame_);
      policy_.refresh_block(block);
      return;
    }
    if (node->child_node[slot] != nullptr) {
      Node* child = node->child_node[slot];
      for (int i = 0; i < 8; ++i) {
        apply_free_slot(child, i, stats);
      }
      return;
    }
    policy_.apply_free(node->child_data[slot]);
    ++stats.node_free_updates;
  }

  // Integration scale for a block this scan: adapted to the measured range at
  // the block centre, never coarser than data the block already holds.
  int block_scale(const Eigen::Vector3i& base) const
  {
    const Tree& tree = *tree_;
    const Eigen::Vector3f centre =
        tree.origin() +
        tree.voxel_dim() * (base.cast<float>() + Eigen::Vector3f::Constant(0.5f * Block::kSide));
    const Eigen::Vector3f c = T_LS_ * centre;
    float d_ref = c.norm();
    int row, col;
    float range;
    if (model_.project(c, row, col, range) && depth_->valid(row, col)) {
      d_ref = depth_->depth(row, col);
    }
    return policy_.select_scale(d_ref);
  }

  void update_block(BlockJob& job, IntegrationStats& stats)
  {
    Block& block = *job.block;
    const int s = job.fresh ? block.current_scale()
                            : std::min(block_scale(block.base_coord()), block.current_scale());
    if (s < block.current_scale()) {
      block.refine_to(s);
    }
    const Tree& tree = *tree_;
    const int n = Block::cells_per_side(s);
    const int stride = 1 << s;
    long updated = 0;
    for (int z = 0; z < n; ++z) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const Eigen::Vector3i cell_base = block.base_coord() + stride * Eigen::Vector3i(x, y, z);
          // Same arithmetic as Octree::cell_centre so that queries by voxel
          // and projective updates agree bit for bit.
          const Eigen::Vector3f centre =
              tree.origin() + tree.voxel_dim() * (cell_base.cast<float>() +
                                                  Eigen::Vector3f::Constant(0.5f * stride));
          const Eigen::Vector3f c = T_LS_ * centre;
          int row, col;
          float d_v;
          if (!model_.project(c, row, col, d_v)) {
            continue;
          }
          const PixelState state = depth_->state(row, col);
          if (state == PixelState::kInvalid) {
            continue;
          }
          if (policy_.update_cell(block.at(s, x, y, z), d_v, depth_->depth(row, col), state, s)) {
            ++updated;
          }
        }
      }
    }
    if (updated > 0) {
      job.any_update = true;
      stats.cells_updated[s] += updated;
      block.set_last_frame(frame_);
      policy_.refresh_block(block);
    }
  }

  Policy policy_;
  const SphericalSensorModel& model_;
  Tree* tree_ = nullptr;
  const DepthImage* depth_ = nullptr;
  Eigen::Isometry3f T_LS_ = Eigen::Isometry3f::Identity();
  int frame_ = 0;
  std::vector<BlockJob> jobs_;
};

} // namespace elmap::detail
