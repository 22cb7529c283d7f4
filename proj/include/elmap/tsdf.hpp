#pragma once

#include <Eigen/Geometry>

#include "elmap/config.hpp"
#include "elmap/mesh.hpp"
#include "elmap/octree.hpp"
#include "elmap/projective.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap {

/// Truncated signed distance cell. The value is normalized to [-1, 1] in
/// multiples of the truncation bound; weight 0 means never observed.
struct TsdfVoxel {
  float value = 0.0f;
  float weight = 0.0f;

  bool is_observed() const { return weight > 0.0f; }

  // TSDF internal nodes carry no values; coarse queries above block scales
  // report unknown.
  static TsdfVoxel from_stats(const BlockStats&) { return {}; }
};

using TsdfTree = Octree<TsdfVoxel>;
using TsdfBlock = VoxelBlock<TsdfVoxel>;

/// Weighted-average fusion of two cells; an unobserved target copies the
/// source. Commutative in value.
TsdfVoxel fuse_tsdf_cells(const TsdfVoxel& target, const TsdfVoxel& source, float max_weight);

/// Rebuilds coarser-scale arrays from current_scale data by weighted mean
/// over observed children.
void refresh_tsdf_block(TsdfBlock& block);

/// Multi-resolution TSDF reconstruction of a single submap volume. The
/// truncation bound adapts to the integration scale, tau(s) = k_tau * voxel *
/// 2^s, and cells update only inside the +-tau band around the measured
/// surface.
class TsdfMap {
 public:
  TsdfMap(const PipelineConfig& config,
          const SphericalSensorModel& model,
          const Eigen::Vector3f& origin);

  IntegrationStats integrate(const DepthImage& depth,
                             const Eigen::Isometry3f& T_map_from_sensor,
                             int frame = 0);

  /// Triangle mesh of the zero level set, per block at its current scale with
  /// cross-block corners sampled at the coarser of the two scales. Vertices
  /// are in the map's own frame, meters.
  TriangleMesh extract_mesh() const;

  void fuse_from(const TsdfMap& source, const Eigen::Isometry3f& T_this_from_source);

  TsdfTree& tree() { return tree_; }
  const TsdfTree& tree() const { return tree_; }
  const SphericalSensorModel& model() const { return model_; }
  const PipelineConfig& config() const { return config_; }

  std::size_t block_count() const { return tree_.block_count(); }
  std::size_t allocated_bytes() const { return tree_.allocated_bytes(); }

 private:
  PipelineConfig config_;
  SphericalSensorModel model_;
  TsdfTree tree_;
};

} // namespace elmap
