#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "elmap/morton.hpp"
#include "elmap/voxel_block.hpp"

namespace elmap {

struct OctreeConfig {
  float map_dim = 200.0f;  // requested physical side length, rounded up to a
                           // power-of-two voxel count
  float voxel_dim = 0.065f;
  Eigen::Vector3f origin = Eigen::Vector3f::Zero(); // minimum corner in the tree's frame
};

/// Actual side length after rounding up to a power-of-two voxel count (at
/// least two block levels).
inline float rounded_map_dim(float map_dim, float voxel_dim)
{
  int depth = 4;
  while (voxel_dim * static_cast<float>(1 << depth) < map_dim) {
    ++depth;
  }
  return voxel_dim * static_cast<float>(1 << depth);
}

/// Internal octree node. Children at the last internal level are voxel
/// blocks, above that they are nodes. A slot without a child can still carry
/// data valid for the entire child cube (child_data), which is how coarse
/// free-space updates are stored and lazily pushed down on expansion.
template <typename VoxelT>
struct OctreeNode {
  using Block = VoxelBlock<VoxelT>;

  std::array<OctreeNode*, 8> child_node{};
  std::array<Block*, 8> child_block{};
  std::array<VoxelT, 8> child_data{};
  BlockStats stats;

  bool has_child(int i) const { return child_node[i] != nullptr || child_block[i] != nullptr; }
};

template <typename VoxelT>
struct OctreeQueryResult {
  VoxelT data{};
  int scale = -1;   // scale the data was found at, -1 if nothing stored
  bool found = false;
};

/// Sparse Morton-indexed octree over a cubic volume with power-of-two voxels
/// per side and 8x8x8-voxel blocks as its finest leaves. Memory grows with
/// the number of allocated blocks and nodes, not with the volume.
///
/// Thread contract: allocation and any structural mutation are serial;
/// concurrent per-block updates are safe only on disjoint blocks; queries may
/// run concurrently with each other but not with mutation.
template <typename VoxelT>
class Octree {
 public:
  using Block = VoxelBlock<VoxelT>;
  using Node = OctreeNode<VoxelT>;

  explicit Octree(const OctreeConfig& config)
      : voxel_dim_(config.voxel_dim), origin_(config.origin)
  {
    if (config.voxel_dim <= 0.0f || config.map_dim <= 0.0f) {
      throw std::invalid_argument("Octree: dimensions must be positive");
    }
    const float voxels = config.map_dim / config.voxel_dim;
    max_depth_ = Block::kDepthLevels + 1; // at least one internal level above blocks
    while ((1 << max_depth_) < voxels) {
      ++max_depth_;
    }
    if (max_depth_ > 21) {
      throw std::invalid_argument("Octree: map exceeds Morton coordinate range");
    }
    map_dim_ = voxel_dim_ * static_cast<float>(1 << max_depth_);
    root_ = new Node();
    ++node_count_;
  }

  ~Octree() { destroy(root_, 0); }

  Octree(Octree&& other) noexcept { *this = std::move(other); }
  Octree& operator=(Octree&& other) noexcept
  {
    if (this != &other) {
      if (root_ != nullptr) {
        destroy(root_, 0);
      }
      voxel_dim_ = other.voxel_dim_;
      map_dim_ = other.map_dim_;
      origin_ = other.origin_;
      max_depth_ = other.max_depth_;
      root_ = std::exchange(other.root_, nullptr);
      node_count_ = std::exchange(other.node_count_, 0);
      block_count_ = std::exchange(other.block_count_, 0);
    }
    return *this;
  }
  Octree(const Octree&) = delete;
  Octree& operator=(const Octree&) = delete;

  float voxel_dim() const { return voxel_dim_; }
  float map_dim() const { return map_dim_; }
  const Eigen::Vector3f& origin() const { return origin_; }
  int max_depth() const { return max_depth_; }
  int block_depth() const { return max_depth_ - Block::kDepthLevels; }
  int voxels_per_side() const { return 1 << max_depth_; }

  std::size_t node_count() const { return node_count_; }
  std::size_t block_count() const { return block_count_; }
  std::size_t allocated_bytes() const
  {
    return node_count_ * sizeof(Node) + block_count_ * sizeof(Block);
  }

  Node* root() { return root_; }
  const Node* root() const { return root_; }

  bool contains_voxel(const Eigen::Vector3i& v) const
  {
    const int n = voxels_per_side();
    return (v.array() >= 0).all() && (v.array() < n).all();
  }
  bool contains(const Eigen::Vector3f& point) const
  {
    return contains_voxel(voxel_of_unchecked(point));
  }

  /// Voxel containing a point of the tree's frame.
  Eigen::Vector3i voxel_of(const Eigen::Vector3f& point) const
  {
    const Eigen::Vector3i v = voxel_of_unchecked(point);
    if (!contains_voxel(v)) {
      throw std::out_of_range("Octree: point outside map bounds");
    }
    return v;
  }

  /// Centre of the cell at the given scale containing a voxel, in meters.
  Eigen::Vector3f cell_centre(const Eigen::Vector3i& voxel, int scale) const
  {
    const int stride = 1 << scale;
    const Eigen::Vector3i base = (voxel.array() / stride) * stride;
    return origin_ + voxel_dim_ * (base.cast<float>() + Eigen::Vector3f::Constant(0.5f * stride));
  }

  /// Internal node owning the block slot for a voxel, creating missing
  /// ancestors on the way down.
  Node* block_parent(const Eigen::Vector3i& voxel)
  {
    if (!contains_voxel(voxel)) {
      throw std::out_of_range("Octree: voxel outside map bounds");
    }
    Node* node = root_;
    for (int depth = 0; depth < block_depth() - 1; ++depth) {
      node = expand_slot(node, child_index(voxel, depth));
    }
    return node;
  }

  /// Allocates (or fetches) the block containing the given voxel along with
  /// any missing ancestors. Idempotent. New structure created under a slot
  /// carrying observed data inherits that data everywhere (lazy push-down).
  Block* allocate_block(const Eigen::Vector3i& voxel, int initial_scale = 0)
  {
    Node* node = block_parent(voxel);
    const int idx = child_index(voxel, block_depth() - 1);
    if (node->child_block[idx] == nullptr) {
      const Eigen::Vector3i base = (voxel.array() / Block::kSide) * Block::kSide;
      Block* block = new Block(base, initial_scale);
      block->fill(node->child_data[idx]);
      node->child_block[idx] = block;
      ++block_count_;
    }
    return node->child_block[idx];
  }

  Block* allocate_block(const MortonKey& key)
  {
    if (key.level != block_depth()) {
      throw std::invalid_argument("Octree: key is not at block level");
    }
    return allocate_block(morton_decode(key.code));
  }

  /// Creates the internal node for a slot, pushing the slot's uniform data
  /// down to the new node's child slots.
  Node* expand_slot(Node* node, int slot)
  {
    if (node->child_node[slot] == nullptr) {
      Node* child = new Node();
      child->child_data.fill(node->child_data[slot]);
      node->child_node[slot] = child;
      ++node_count_;
    }
    return node->child_node[slot];
  }

  /// Removes a block from its parent slot; the slot's previous uniform data
  /// becomes authoritative again.
  void remove_block(Node* parent, int slot)
  {
    if (parent->child_block[slot] != nullptr) {
      delete parent->child_block[slot];
      parent->child_block[slot] = nullptr;
      --block_count_;
    }
  }

  Block* fetch_block(const Eigen::Vector3i& voxel)
  {
    return const_cast<Block*>(std::as_const(*this).fetch_block(voxel));
  }
  const Block* fetch_block(const Eigen::Vector3i& voxel) const
  {
    if (!contains_voxel(voxel)) {
      return nullptr;
    }
    const Node* node = root_;
    for (int depth = 0; depth < block_depth() - 1; ++depth) {
      node = node->child_node[child_index(voxel, depth)];
      if (node == nullptr) {
        return nullptr;
      }
    }
    return node->child_block[child_index(voxel, block_depth() - 1)];
  }

  /// Data stored at the finest available scale >= min_scale for the cell
  /// containing the point. Scales above kMaxScale address internal levels,
  /// where the result carries the subtree aggregate (stats) or the uniform
  /// cube value of an unexpanded slot. Unobserved space returns the default
  /// VoxelT as the unknown sentinel.
  OctreeQueryResult<VoxelT> query(const Eigen::Vector3f& point, int min_scale) const
  {
    const Eigen::Vector3i voxel = voxel_of(point);
    return query_voxel(voxel, min_scale);
  }

  OctreeQueryResult<VoxelT> query_voxel(const Eigen::Vector3i& voxel, int min_scale) const
  {
    if (!contains_voxel(voxel)) {
      throw std::out_of_range("Octree: point outside map bounds");
    }
    min_scale = std::max(0, std::min(min_scale, max_depth_));
    const Node* node = root_;
    int depth = 0;
    while (true) {
      const int node_scale = max_depth_ - depth;
      if (node_scale <= min_scale) {
        // Requested scale reached at an internal level: report the aggregate.
        OctreeQueryResult<VoxelT> r;
        r.data = VoxelT::from_stats(node->stats);
        r.scale = node_scale;
        r.found = node->stats.any_observed;
        return r;
      }
      const int idx = child_index(voxel, depth);
      const int child_scale = node_scale - 1;
      if (node->child_block[idx] != nullptr) {
        const Block* block = node->child_block[idx];
        if (min_scale > Block::kMaxScale) {
          OctreeQueryResult<VoxelT> r;
          r.data = VoxelT::from_stats(block->stats());
          r.scale = min_scale;
          r.found = block->stats().any_observed;
          return r;
        }
        const int s = std::max(min_scale, block->current_scale());
        const Eigen::Vector3i offset = voxel - block->base_coord();
        OctreeQueryResult<VoxelT> r;
        r.data = block->cell_containing(s, offset);
        r.scale = s;
        r.found = true;
        return r;
      }
      if (node->child_node[idx] != nullptr) {
        node = node->child_node[idx];
        ++depth;
        continue;
      }
      // Unexpanded slot: uniform value for the whole child cube.
      OctreeQueryResult<VoxelT> r;
      r.data = node->child_data[idx];
      r.scale = std::max(child_scale, min_scale);
      r.found = r.data.is_observed();
      return r;
    }
  }

  /// Visits every allocated block exactly once in Z-order (children visited
  /// in Morton index order gives exactly the sorted-key order).
  template <typename Visitor>
  void iterate_blocks(Visitor&& visitor) const
  {
    iterate_impl(root_, 0, visitor);
  }

  std::vector<Block*> blocks()
  {
    std::vector<Block*> out;
    out.reserve(block_count_);
    iterate_blocks([&](const Block& b) { out.push_back(const_cast<Block*>(&b)); });
    return out;
  }
  std::vector<const Block*> blocks() const
  {
    std::vector<const Block*> out;
    out.reserve(block_count_);
    iterate_blocks([&](const Block& b) { out.push_back(&b); });
    return out;
  }

  /// Child slot index (x lowest bit) of a voxel at the given node depth.
  int child_index(const Eigen::Vector3i& voxel, int depth) const
  {
    const int shift = max_depth_ - 1 - depth;
    return ((voxel.x() >> shift) & 1) | (((voxel.y() >> shift) & 1) << 1) |
           (((voxel.z() >> shift) & 1) << 2);
  }

 private:
  Eigen::Vector3i voxel_of_unchecked(const Eigen::Vector3f& point) const
  {
    const Eigen::Vector3f rel = (point - origin_) / voxel_dim_;
    return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
            static_cast<int>(std::floor(rel.z()))};
  }

  template <typename Visitor>
  void iterate_impl(const Node* node, int depth, Visitor& visitor) const
  {
    for (int i = 0; i < 8; ++i) {
      if (node->child_block[i] != nullptr) {
        visitor(static_cast<const Block&>(*node->child_block[i]));
      } else if (node->child_node[i] != nullptr) {
        iterate_impl(node->child_node[i], depth + 1, visitor);
      }
    }
  }

  void destroy(Node* node, int depth)
  {
    if (node == nullptr) {
      return;
    }
    for (int i = 0; i < 8; ++i) {
      if (node->child_node[i] != nullptr) {
        destroy(node->child_node[i], depth + 1);
      }
      delete node->child_block[i];
    }
    delete node;
  }

  float voxel_dim_ = 0.065f;
  float map_dim_ = 0.0f;
  Eigen::Vector3f origin_ = Eigen::Vector3f::Zero();
  int max_depth_ = 0;
  Node* root_ = nullptr;
  std::size_t node_count_ = 0;
  std::size_t block_count_ = 0;
};

} // namespace elmap
