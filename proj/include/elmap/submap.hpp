#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>

#include "elmap/config.hpp"
#include "elmap/projective.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap {

enum class EdgeType { kOdometry, kLoopClosure };

struct PoseGraphEdge {
  EdgeType type = EdgeType::kOdometry;
  int from = 0;
  int to = 0;
};

/// SLAM pose graph: device poses in the map frame, odometry edges between
/// consecutive nodes, loop-closure edges between revisits, and the static
/// device-to-LiDAR extrinsic.
struct PoseGraph {
  std::vector<Eigen::Isometry3d> nodes; // T_map_from_base per node
  std::vector<PoseGraphEdge> edges;
  Eigen::Isometry3d T_base_from_lidar = Eigen::Isometry3d::Identity();

  int size() const { return static_cast<int>(nodes.size()); }

  Eigen::Isometry3d lidar_pose(int k) const { return nodes.at(k) * T_base_from_lidar; }
  Eigen::Vector3d lidar_position(int k) const { return lidar_pose(k).translation(); }

  /// Throws if an edge references a missing node or an odometry edge is not
  /// between consecutive indices.
  void validate() const;
};

/// Pose graph plus one organized cloud per node; the unit of ingestion.
struct RegisteredCloudList {
  PoseGraph graph;
  std::vector<OrganizedCloud> clouds;
  SphericalSensorModel model = SphericalSensorModel::os1_64();
};

/// Shortest-path distance between two nodes where each edge costs the
/// Euclidean distance between its endpoint LiDAR positions. Throws when the
/// nodes are not connected.
double graph_distance(const PoseGraph& graph, int from, int to);

/// Dijkstra from one source over all nodes; unreachable nodes get +inf.
std::vector<double> graph_distances_from(const PoseGraph& graph, int source);

struct GraphClustering {
  std::vector<int> submap_of_node; // odometry-chain assignment
  std::vector<int> submap_roots;   // root node of each submap
  std::vector<std::vector<int>> loop_clusters; // merged, each sorted by node id
};

/// Batch clustering: walking nodes in order, a node joins the current submap
/// while the odometry arc from the submap root stays within lambda_odom,
/// otherwise it roots a new submap. Every loop-closure edge (a, b) clusters
/// the nodes within lambda_cluster of either endpoint (full-graph shortest
/// path); clusters sharing nodes are merged.
GraphClustering cluster_graph(const PoseGraph& graph, const ClusteringConfig& config);

/// Nodes within lambda_cluster of either endpoint of one loop edge.
std::vector<int> loop_closure_cluster(const PoseGraph& graph, const PoseGraphEdge& edge,
                                      double lambda_cluster);

/// Relative pose of the LiDAR at node k in the submap frame:
/// T_submap_from_lidar = T_map_from_submap^-1 * T_map_from_base * T_base_from_lidar.
inline Eigen::Isometry3d relative_lidar_pose(const Eigen::Isometry3d& T_map_from_submap,
                                             const Eigen::Isometry3d& T_map_from_base,
                                             const Eigen::Isometry3d& T_base_from_lidar)
{
  return T_map_from_submap.inverse() * T_map_from_base * T_base_from_lidar;
}

/// True when the root pose changed enough to warrant a rigid correction:
/// translation above lambda_update or geodesic rotation angle above
/// theta_update (degrees).
bool pose_update_check(const Eigen::Isometry3d& T_new, const Eigen::Isometry3d& T_old,
                       double lambda_update, double theta_update_deg);

/// One bounded local reconstruction. The root pose is the LiDAR pose of the
/// submap's first node at creation time (or the last accepted correction);
/// elasticity comes from rigidly moving it.
template <typename MapT>
struct Submap {
  int id = 0;
  Eigen::Isometry3d T_map_from_submap = Eigen::Isometry3d::Identity();
  int root_node = -1;
  std::vector<int> nodes; // node indices integrated or assigned here
  MapT map;

  Submap(int id_, const Eigen::Isometry3d& root_pose, int root_node_, MapT map_)
      : id(id_), T_map_from_submap(root_pose), root_node(root_node_), map(std::move(map_))
  {
  }
};

/// Merges source into target per the fusion transform
/// T_target_from_source = T_MS_target^-1 * T_MS_source; target absorbs the
/// source's node set. The caller discards the source afterwards.
template <typename MapT>
void fuse_submaps(Submap<MapT>& target, Submap<MapT>& source)
{
  if (&target == &source) {
    throw std::invalid_argument("fuse_submaps: cannot fuse a submap with itself");
  }
  const Eigen::Isometry3d T_ts = target.T_map_from_submap.inverse() * source.T_map_from_submap;
  target.map.fuse_from(source.map, T_ts.cast<float>());
  target.nodes.insert(target.nodes.end(), source.nodes.begin(), source.nodes.end());
}

struct PoseCorrection {
  int submap_id = 0;
  Eigen::Isometry3d before = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d after = Eigen::Isometry3d::Identity();
};

/// The elastic layer: assigns incoming nodes to submaps by the odometry
/// clustering rule, integrates scans, reacts to loop-closure edges with
/// cluster computation and submap fusion, and applies threshold-gated rigid
/// root-pose corrections. MapT is OccupancyMap or TsdfMap.
template <typename MapT>
class SubmapManager {
 public:
  SubmapManager(const PipelineConfig& config, const SphericalSensorModel& model,
                const Eigen::Isometry3d& T_base_from_lidar = Eigen::Isometry3d::Identity())
      : config_(config), model_(model)
  {
    graph_.T_base_from_lidar = T_base_from_lidar;
  }

  /// Appends the next node; integrates its cloud unless null (subsampled).
  /// An odometry edge to the previous node is implied.
  IntegrationStats add_node(const Eigen::Isometry3d& T_map_from_base,
                            const OrganizedCloud* cloud)
  {
    const int k = graph_.size();
    graph_.nodes.push_back(T_map_from_base);
    if (k > 0) {
      graph_.edges.push_back({EdgeType::kOdometry, k - 1, k});
    }

    bool spawn = current_submap_ < 0;
    if (!spawn) {
      arc_from_root_ += (graph_.lidar_position(k) - graph_.lidar_position(k - 1)).norm();
      spawn = arc_from_root_ > config_.clustering.lambda_odom;
    }
    if (spawn) {
      const Eigen::Isometry3d root_pose = graph_.lidar_pose(k);
      const int id = static_cast<int>(submaps_.size());
      // Volume centred on the root; a block-aligned origin keeps fusion of
      // block-aligned submaps free of resampling.
      const float half_dim = 0.5f * rounded_map_dim(config_.submap_dim, config_.voxel_dim);
      submaps_.push_back(std::make_unique<Submap<MapT>>(
          id, root_pose, k, MapT(config_, model_, Eigen::Vector3f::Constant(-half_dim))));
      current_submap_ = id;
      arc_from_root_ = 0.0;
    }
    Submap<MapT>& submap = *submaps_[current_submap_];
    submap.nodes.push_back(k);
    node_to_submap_.push_back(current_submap_);

    IntegrationStats stats;
    if (cloud != nullptr) {
      stats = integrate_node(submap, k, *cloud);
    }
    return stats;
  }

  /// Integrates node k's cloud into its submap, with the relative transform
  /// composed from the root, device and extrinsic poses. A node can be
  /// integrated at most once.
  IntegrationStats integrate_node(Submap<MapT>& submap, int k, const OrganizedCloud& cloud)
  {
    if (integrated_.size() > static_cast<std::size_t>(k) && integrated_[k]) {
      throw std::invalid_argument("integrate_node: node already integrated");
    }
    const Eigen::Isometry3d T_SL = relative_lidar_pose(
        submap.T_map_from_submap, graph_.nodes.at(k), graph_.T_base_from_lidar);
    const DepthImage depth = cloud_to_depth_image(cloud, model_);
    const IntegrationStats stats = submap.map.integrate(depth, T_SL.cast<float>(), k);
    if (integrated_.size() <= static_cast<std::size_t>(k)) {
      integrated_.resize(k + 1, false);
    }
    integrated_[k] = true;
    return stats;
  }

  /// Registers an edge. A loop-closure edge immediately computes its cluster
  /// and, with fusion enabled, merges every submap holding cluster nodes into
  /// the oldest of them.
  void add_edge(const PoseGraphEdge& edge)
  {
    if (edge.from < 0 || edge.to < 0 || edge.from >= graph_.size() || edge.to >= graph_.size()) {
      throw std::invalid_argument("add_edge: node index out of range");
    }
    if (edge.type == EdgeType::kOdometry) {
      if (std::abs(edge.from - edge.to) != 1) {
        throw std::invalid_argument("add_edge: odometry edges connect consecutive nodes");
      }
      return; // already implied by add_node
    }
    graph_.edges.push_back(edge);
    if (!config_.fusion_enabled) {
      return;
    }
    const std::vector<int> cluster =
        loop_closure_cluster(graph_, edge, config_.clustering.lambda_cluster);
    fuse_cluster(cluster);
  }

  /// Applies the updated SLAM poses: each live submap whose root node moved
  /// beyond the update thresholds gets its root pose replaced (reconstruction
  /// untouched). Returns the number of corrected submaps.
  int apply_pose_updates(const PoseGraph& updated)
  {
    int corrected = 0;
    for (const auto& submap : submaps_) {
      if (submap == nullptr) {
        continue;
      }
      if (submap->root_node >= updated.size()) {
        throw std::invalid_argument("apply_pose_updates: root node missing from updated graph");
      }
      const Eigen::Isometry3d candidate = updated.lidar_pose(submap->root_node);
      if (pose_update_check(candidate, submap->T_map_from_submap,
                            config_.clustering.lambda_update,
                            config_.clustering.theta_update_deg)) {
        corrections_.push_back({submap->id, submap->T_map_from_submap, candidate});
        submap->T_map_from_submap = candidate;
        ++corrected;
      }
    }
    // Adopt the new poses for all future integration and clustering.
    for (int k = 0; k < graph_.size() && k < updated.size(); ++k) {
      graph_.nodes[k] = updated.nodes[k];
    }
    return corrected;
  }

  const PoseGraph& graph() const { return graph_; }
  const PipelineConfig& config() const { return config_; }
  const SphericalSensorModel& model() const { return model_; }

  std::vector<const Submap<MapT>*> live_submaps() const
  {
    std::vector<const Submap<MapT>*> out;
    for (const auto& s : submaps_) {
      if (s != nullptr) {
        out.push_back(s.get());
      }
    }
    return out;
  }
  std::vector<Submap<MapT>*> live_submaps()
  {
    std::vector<Submap<MapT>*> out;
    for (auto& s : submaps_) {
      if (s != nullptr) {
        out.push_back(s.get());
      }
    }
    return out;
  }

  std::size_t live_submap_count() const { return live_submaps().size(); }

  int submap_id_of_node(int k) const
  {
    return k < static_cast<int>(node_to_submap_.size()) ? node_to_submap_[k] : -1;
  }

  std::size_t total_blocks() const
  {
    std::size_t n = 0;
    for (const auto* s : live_submaps()) {
      n += s->map.block_count();
    }
    return n;
  }
  std::size_t total_allocated_bytes() const
  {
    std::size_t n = 0;
    for (const auto* s : live_submaps()) {
      n += s->map.allocated_bytes();
    }
    return n;
  }

  const std::vector<PoseCorrection>& corrections() const { return corrections_; }

 private:
  void fuse_cluster(const std::vector<int>& cluster)
  {
    std::vector<int> ids;
    for (int node : cluster) {
      const int id = submap_id_of_node(node);
      if (id >= 0 && submaps_[id] != nullptr && std::find(ids.begin(), ids.end(), id) == ids.end()) {
        ids.push_back(id);
      }
    }
    if (ids.size() < 2) {
      return;
    }
    std::sort(ids.begin(), ids.end());
    Submap<MapT>& target = *submaps_[ids.front()];
    for (std::size_t i = 1; i < ids.size(); ++i) {
      Submap<MapT>& source = *submaps_[ids[i]];
      fuse_submaps(target, source);
      for (int node : source.nodes) {
        node_to_submap_[node] = target.id;
      }
      if (current_submap_ == source.id) {
        current_submap_ = target.id;
        // Force the next node to re-evaluate against the (distant) old root.
        arc_from_root_ = graph_distance_along_chain(target.root_node);
      }
      submaps_[source.id].reset();
    }
  }

  double graph_distance_along_chain(int root) const
  {
    double arc = 0.0;
    for (int k = root + 1; k < graph_.size(); ++k) {
      arc += (graph_.lidar_position(k) - graph_.lidar_position(k - 1)).norm();
    }
    return arc;
  }

  PipelineConfig config_;
  SphericalSensorModel model_;
  PoseGraph graph_;
  std::vector<std::unique_ptr<Submap<MapT>>> submaps_;
  std::vector<int> node_to_submap_;
  std::vector<bool> integrated_;
  std::vector<PoseCorrection> corrections_;
  int current_submap_ = -1;
  double arc_from_root_ = 0.0;
};

/// Replays a full list in arrival order: nodes in index order, each loop
/// edge as soon as both endpoints exist. Equivalent to feeding the manager
/// incrementally.
template <typename MapT>
SubmapManager<MapT> process_stream(const RegisteredCloudList& list, const PipelineConfig& config)
{
  list.graph.validate();
  if (list.clouds.size() != list.graph.nodes.size()) {
    throw std::invalid_argument("process_stream: one cloud per node required");
  }
  SubmapManager<MapT> manager(config, list.model, list.graph.T_base_from_lidar);
  for (int k = 0; k < list.graph.size(); ++k) {
    manager.add_node(list.graph.nodes[k], &list.clouds[k]);
    for (const PoseGraphEdge& edge : list.graph.edges) {
      if (edge.type == EdgeType::kLoopClosure && std::max(edge.from, edge.to) == k) {
        manager.add_edge(edge);
      }
    }
  }
  return manager;
}

} // namespace elmap
