#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Geometry>

#include "elmap/config.hpp"
#include "elmap/octree.hpp"
#include "elmap/projective.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap {

/// Log-odds occupancy cell. Free, unknown and occupied cells have negative,
/// zero and positive log-odds respectively; zero with observed == false is
/// the unknown sentinel.
struct OccupancyVoxel {
  float log_odds = 0.0f;
  std::uint16_t weight = 0; // update count, diagnostics only
  bool observed = false;

  bool is_observed() const { return observed; }

  static OccupancyVoxel from_stats(const BlockStats& s)
  {
    OccupancyVoxel v;
    v.log_odds = s.max_value;
    v.observed = s.any_observed;
    return v;
  }
};

enum class Occupancy { kUnknown, kFree, kOccupied };

struct OccupancyQueryResult {
  Occupancy state = Occupancy::kUnknown;
  float log_odds = 0.0f;
  int scale = -1;
};

inline Occupancy classify_occupancy(const OccupancyVoxel& v)
{
  if (!v.observed || v.log_odds == 0.0f) {
    return Occupancy::kUnknown;
  }
  return v.log_odds > 0.0f ? Occupancy::kOccupied : Occupancy::kFree;
}

/// Log-odds increment for a cell at along-ray distance d_v given a measured
/// range d_r, at integration scale s. Piecewise linear in d_v: the constant
/// free value in front of the surface, a ramp crossing zero at d_r, capped at
/// log_odds_max, and no update beyond d_r + 3*sigma so space behind the
/// surface stays unobserved. sigma = surface_thickness_factor * voxel * 2^s.
std::optional<float> log_odds_measurement(float d_v,
                                          float d_r,
                                          int scale,
                                          const OccupancyParams& params,
                                          float voxel_dim);

/// Same for a ray with no return within max range (clamped): the free plateau
/// applies up to the clamped range, there is no occupied band.
std::optional<float> log_odds_measurement_free_only(float d_v,
                                                    float d_r,
                                                    int scale,
                                                    const OccupancyParams& params,
                                                    float voxel_dim);

using OccupancyTree = Octree<OccupancyVoxel>;
using OccupancyBlock = VoxelBlock<OccupancyVoxel>;

/// Rebuilds the block's coarser-scale arrays from current_scale data by
/// max-propagation (unobserved cells count as log-odds 0) and refreshes the
/// cached block aggregate.
void refresh_occupancy_block(OccupancyBlock& block);

/// Recomputes every internal node's subtree aggregate (max log-odds, observed
/// flags) from block aggregates and unexpanded-slot data, bottom-up.
void up_propagate(OccupancyTree& tree);

/// target <- source: copies into unobserved cells, otherwise adds log-odds
/// under the clamp bounds.
OccupancyVoxel fuse_occupancy_cells(const OccupancyVoxel& target,
                                    const OccupancyVoxel& source,
                                    const OccupancyParams& params);

/// Multi-resolution log-odds occupancy reconstruction of a single submap
/// volume. Scan integration is projective: affected octree regions are found
/// by conservative cone/band tests, cells update at the scale selected from
/// the measured range, and regions fully inside observed free space receive a
/// single update at the coarsest covering node.
class OccupancyMap {
 public:
  OccupancyMap(const PipelineConfig& config,
               const SphericalSensorModel& model,
               const Eigen::Vector3f& origin);

  /// Integrates one depth image taken at T_map_from_sensor. Serial structure
  /// phase, parallel per-block updates, then up-propagation.
  IntegrationStats integrate(const DepthImage& depth,
                             const Eigen::Isometry3f& T_map_from_sensor,
                             int frame = 0);

  /// Occupancy at the finest available scale >= min_scale; internal levels
  /// answer with the subtree maximum, so a "free" answer at a coarse scale
  /// guarantees every finer cell is free.
  OccupancyQueryResult query(const Eigen::Vector3f& point, int min_scale = 0) const;

  /// Conservative classification of a ball: kOccupied if any possibly
  /// occupied cell intersects it, kFree if it is entirely observed free,
  /// kUnknown otherwise. Coarse nodes short-circuit the descent. Points
  /// outside the map volume count as unknown.
  Occupancy classify_ball(const Eigen::Vector3f& centre, float radius) const;

  void fuse_from(const OccupancyMap& source, const Eigen::Isometry3f& T_this_from_source);

  OccupancyTree& tree() { return tree_; }
  const OccupancyTree& tree() const { return tree_; }
  const SphericalSensorModel& model() const { return model_; }
  const PipelineConfig& config() const { return config_; }

  std::size_t block_count() const { return tree_.block_count(); }
  std::size_t allocated_bytes() const { return tree_.allocated_bytes(); }

 private:
  PipelineConfig config_;
  SphericalSensorModel model_;
  OccupancyTree tree_;
};

} // namespace elmap
