#pragma once

#include <string>

namespace elmap {

enum class PipelineKind { kTsdf, kOccupancy };

/// MultiresTSDF parameters. The truncation bound adapts to the integration
/// scale: tau(s) = truncation_factor * voxel_dim * 2^s.
struct TsdfParams {
  float truncation_factor = 4.0f; // k_tau, in voxels
  float max_weight = 100.0f;      // W_max
};

/// MultiresOFusion parameters. The per-ray measurement is a piecewise linear
/// ramp in the along-ray distance: constant log_odds_min in front of the
/// surface, crossing zero at the measured range with slope log_odds_max/sigma,
/// cut off 3*sigma behind it, where sigma = surface_thickness_factor *
/// voxel_dim * 2^s.
struct OccupancyParams {
  float log_odds_min = -0.4f; // per-update free increment (l_min)
  float log_odds_max = 1.0f;  // per-update surface cap (l_max)
  float clamp_min = -5.0f;    // L_min
  float clamp_max = 5.0f;     // L_max
  float surface_thickness_factor = 3.0f; // k_sigma, in voxels
};

struct ClusteringConfig {
  double lambda_odom = 30.0;    // odometry-chain span of one submap, meters
  double lambda_cluster = 15.0; // loop-closure cluster radius, meters
  double lambda_update = 0.1;   // pose-correction translation threshold, meters
  double theta_update_deg = 2.5; // pose-correction rotation threshold, degrees
};

/// Everything a replay needs: reconstruction, clustering and update
/// parameters. Submap volumes are cubes of submap_dim meters centred on the
/// submap root.
struct PipelineConfig {
  PipelineKind pipeline = PipelineKind::kOccupancy;
  float voxel_dim = 0.065f;
  float submap_dim = 200.0f;
  float max_range = 60.0f;
  int max_scale = 3; // cap on the integration scale (0 forces single-resolution)
  TsdfParams tsdf;
  OccupancyParams occupancy;
  ClusteringConfig clustering;
  bool fusion_enabled = true;
};

inline std::string to_string(PipelineKind kind)
{
  return kind == PipelineKind::kTsdf ? "tsdf" : "occupancy";
}

} // namespace elmap
