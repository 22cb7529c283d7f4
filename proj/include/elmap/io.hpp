#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "elmap/mesh.hpp"
#include "elmap/occupancy.hpp"
#include "elmap/submap.hpp"
#include "elmap/tsdf.hpp"

namespace elmap {

// ---- PLY ----------------------------------------------------------------

void save_ply_cloud(const std::string& path, const std::vector<Eigen::Vector3f>& points,
                    bool binary = true);
std::vector<Eigen::Vector3f> load_ply_cloud(const std::string& path);

void save_ply_mesh(const std::string& path, const TriangleMesh& mesh, bool binary = true);

/// Organized clouds keep their row-major beam layout; width/height travel in
/// obj_info header lines.
void save_ply_organized(const std::string& path, const OrganizedCloud& cloud, bool binary = true);
OrganizedCloud load_ply_organized(const std::string& path);

/// Waypoint polyline (vertex + edge elements), for planner output.
void save_ply_polyline(const std::string& path, const std::vector<Eigen::Vector3f>& waypoints);

// ---- Registered-cloud-list bundle ----------------------------------------

/// Directory layout: graph.txt (NODE index tx ty tz qx qy qz qw / EDGE
/// ODOM|LOOP from to / EXTRINSIC tx..qw), sensor.txt, cloud_<index>.ply.
RegisteredCloudList load_bundle(const std::string& dir);
void save_bundle(const std::string& dir, const RegisteredCloudList& list, bool binary = true);

// ---- Metrics --------------------------------------------------------------

struct MetricsRecord {
  int scan_index = 0;
  int node_index = 0;
  double wall_ms = 0.0;
  double rss_mb = 0.0;
  std::size_t block_bytes = 0;
  std::size_t blocks = 0;
  std::size_t submaps = 0;
  std::array<long, 4> cells_updated{0, 0, 0, 0};
};

inline constexpr const char* kMetricsCsvHeader =
    "scan,node,wall_ms,rss_mb,block_bytes,blocks,submaps,cells_s0,cells_s1,cells_s2,cells_s3";

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

/// Resident set size of this process, MB.
double resident_memory_mb();

// ---- Point-to-point evaluation ---------------------------------------------

struct CloudErrorStats {
  std::vector<double> thresholds;
  std::vector<double> fraction_within; // per threshold
  std::vector<long> histogram;
  double bin_width = 0.05;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

/// Exact nearest-neighbor distance from every test point to the reference
/// cloud (k-d tree), with fractions under the given thresholds.
CloudErrorStats cloud_to_cloud_error(const std::vector<Eigen::Vector3f>& test,
                                     const std::vector<Eigen::Vector3f>& reference,
                                     std::vector<double> thresholds = {0.1, 0.25, 0.5, 1.0});

// ---- Replay ---------------------------------------------------------------

template <typename MapT>
struct ReplayResult {
  SubmapManager<MapT> manager;
  std::vector<MetricsRecord> metrics;
};

/// Streams a list through a manager. With subsample_m > 0 a cloud is
/// integrated only after that much arc length since the last integrated one
/// (every node still enters the graph and its submap).
template <typename MapT>
ReplayResult<MapT> replay(const RegisteredCloudList& list, const PipelineConfig& config,
                          double subsample_m = 0.0)
{
  list.graph.validate();
  if (list.clouds.size() != list.graph.nodes.size()) {
    throw std::invalid_argument("replay: one cloud per node required");
  }
  ReplayResult<MapT> result{
      SubmapManager<MapT>(config, list.model, list.graph.T_base_from_lidar), {}};
  double arc_since_integrated = 0.0;
  bool any_integrated = false;
  int scan_index = 0;
  for (int k = 0; k < list.graph.size(); ++k) {
    if (k > 0) {
      arc_since_integrated +=
          (list.graph.lidar_position(k) - list.graph.lidar_position(k - 1)).norm();
    }
    const bool integrate = !any_integrated || subsample_m <= 0.0 ||
                           arc_since_integrated >= subsample_m - 1e-9;
    const IntegrationStats stats =
        result.manager.add_node(list.graph.nodes[k], integrate ? &list.clouds[k] : nullptr);
    if (integrate) {
      any_integrated = true;
      arc_since_integrated = 0.0;
      MetricsRecord rec;
      rec.scan_index = scan_index++;
      rec.node_index = k;
      rec.wall_ms = stats.wall_ms;
      rec.rss_mb = resident_memory_mb();
      rec.block_bytes = result.manager.total_allocated_bytes();
      rec.blocks = result.manager.total_blocks();
      rec.submaps = result.manager.live_submap_count();
      rec.cells_updated = stats.cells_updated;
      result.metrics.push_back(rec);
    }
    for (const PoseGraphEdge& edge : list.graph.edges) {
      if (edge.type == EdgeType::kLoopClosure && std::max(edge.from, edge.to) == k) {
        result.manager.add_edge(edge);
      }
    }
  }
  return result;
}

// ---- Global export ----------------------------------------------------------

/// Fuses all live submaps into one fresh identity-rooted reconstruction in
/// the map frame (volume sized to cover their allocated content).
template <typename MapT>
MapT fuse_all_submaps(const SubmapManager<MapT>& manager)
{
  const auto submaps = manager.live_submaps();
  if (submaps.empty()) {
    throw std::invalid_argument("fuse_all_submaps: no submaps");
  }
  Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity());
  Eigen::Vector3f hi = -lo;
  for (const auto* submap : submaps) {
    const auto& tree = submap->map.tree();
    const Eigen::Isometry3f T_MS = submap->T_map_from_submap.template cast<float>();
    tree.iterate_blocks([&](const auto& block) {
      const Eigen::Vector3f base =
          tree.origin() + tree.voxel_dim() * block.base_coord().template cast<float>();
      const float side = tree.voxel_dim() * 8.0f;
      for (int c = 0; c < 8; ++c) {
        const Eigen::Vector3f corner =
            base + side * Eigen::Vector3f(c & 1, (c >> 1) & 1, (c >> 2) & 1);
        const Eigen::Vector3f p = T_MS * corner;
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    });
  }
  if (!(lo.x() <= hi.x())) { // no allocated content anywhere
    lo = Eigen::Vector3f::Constant(-1.0f);
    hi = Eigen::Vector3f::Constant(1.0f);
  }
  PipelineConfig config = manager.config();
  const Eigen::Vector3f pad = Eigen::Vector3f::Constant(2.0f * config.voxel_dim);
  lo -= pad;
  hi += pad;
  // Snap the origin to the block lattice so identity- and block-aligned
  // submaps fuse block for block without nearest-cell aliasing.
  const float block_dim = 8.0f * config.voxel_dim;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::floor(lo[a] / block_dim) * block_dim;
  }
  config.submap_dim = (hi - lo).maxCoeff();
  MapT global(config, manager.model(), lo);
  for (const auto* submap : submaps) {
    global.fuse_from(submap->map, submap->T_map_from_submap.template cast<float>());
  }
  return global;
}

/// Mesh of the fused global TSDF, map-frame vertices.
TriangleMesh export_global_mesh(const SubmapManager<TsdfMap>& manager);

/// Vertex cloud of the fused global TSDF mesh.
std::vector<Eigen::Vector3f> export_global_cloud(const SubmapManager<TsdfMap>& manager);

/// Occupied cell centres of the fused global occupancy map.
std::vector<Eigen::Vector3f> export_global_cloud(const SubmapManager<OccupancyMap>& manager);

/// Horizontal cross-section of the fused occupancy map at height z:
/// grayscale PNG, black = occupied, white = free, gray = unknown.
void save_occupancy_slice_png(const std::string& path, const OccupancyMap& map, float z);

std::vector<Eigen::Vector3f> occupied_cell_centres(const OccupancyMap& map);

} // namespace elmap
