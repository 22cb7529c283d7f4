#include "elmap/submap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace elmap {

void PoseGraph::validate() const
{
  for (const PoseGraphEdge& e : edges) {
    if (e.from < 0 || e.to < 0 || e.from >= size() || e.to >= size()) {
      throw std::invalid_argument("PoseGraph: edge references missing node");
    }
    if (e.type == EdgeType::kOdometry && std::abs(e.from - e.to) != 1) {
      throw std::invalid_argument("PoseGraph: odometry edges must connect consecutive nodes");
    }
  }
}

std::vector<double> graph_distances_from(const PoseGraph& graph, int source)
{
  if (source < 0 || source >= graph.size()) {
    throw std::invalid_argument("graph_distances_from: node out of range");
  }
  // Adjacency over both edge types; edge cost is the Euclidean distance
  // between the endpoint LiDAR positions.
  std::vector<std::vector<std::pair<int, double>>> adj(graph.size());
  for (const PoseGraphEdge& e : graph.edges) {
    const double cost = (graph.lidar_position(e.from) - graph.lidar_position(e.to)).norm();
    adj[e.from].push_back({e.to, cost});
    adj[e.to].push_back({e.from, cost});
  }
  std::vector<double> dist(graph.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.push({0.0, source});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) {
      continue;
    }
    for (const auto& [v, cost] : adj[u]) {
      if (d + cost < dist[v]) {
        dist[v] = d + cost;
        queue.push({dist[v], v});
      }
    }
  }
  return dist;
}

double graph_distance(const PoseGraph& graph, int from, int to)
{
  if (to < 0 || to >= graph.size()) {
    throw std::invalid_argument("graph_distance: node out of range");
  }
  const double d = graph_distances_from(graph, from)[to];
  if (!std::isfinite(d)) {
    throw std::runtime_error("graph_distance: nodes are not connected");
  }
  return d;
}

std::vector<int> loop_closure_cluster(const PoseGraph& graph, const PoseGraphEdge& edge,
                                      double lambda_cluster)
{
  const std::vector<double> da = graph_distances_from(graph, edge.from);
  const std::vector<double> db = graph_distances_from(graph, edge.to);
  std::vector<int> cluster;
  for (int n = 0; n < graph.size(); ++n) {
    if (std::min(da[n], db[n]) < lambda_cluster) {
      cluster.push_back(n);
    }
  }
  return cluster;
}

GraphClustering cluster_graph(const PoseGraph& graph, const ClusteringConfig& config)
{
  graph.validate();
  GraphClustering out;
  out.submap_of_node.resize(graph.size(), -1);

  double arc = 0.0;
  for (int k = 0; k < graph.size(); ++k) {
    bool spawn = out.submap_roots.empty();
    if (!spawn) {
      arc += (graph.lidar_position(k) - graph.lidar_position(k - 1)).norm();
      spawn = arc > config.lambda_odom;
    }
    if (spawn) {
      out.submap_roots.push_back(k);
      arc = 0.0;
    }
    out.submap_of_node[k] = static_cast<int>(out.submap_roots.size()) - 1;
  }

  // Per-edge clusters, then union-find merge of clusters sharing nodes.
  std::vector<std::vector<int>> clusters;
  for (const PoseGraphEdge& e : graph.edges) {
    if (e.type == EdgeType::kLoopClosure) {
      clusters.push_back(loop_closure_cluster(graph, e, config.lambda_cluster));
    }
  }
  std::vector<int> parent(clusters.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int i) {
    while (parent[i] != i) {
      i = parent[i] = parent[parent[i]];
    }
    return i;
  };
  std::vector<int> owner(graph.size(), -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (int n : clusters[c]) {
      if (owner[n] >= 0) {
        parent[find(static_cast<int>(c))] = find(owner[n]);
      } else {
        owner[n] = static_cast<int>(c);
      }
    }
  }
  std::vector<std::vector<int>> merged(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    auto& m = merged[find(static_cast<int>(c))];
    m.insert(m.end(), clusters[c].begin(), clusters[c].end());
  }
  for (auto& m : merged) {
    if (m.empty()) {
      continue;
    }
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    out.loop_clusters.push_back(std::move(m));
  }
  return out;
}

bool pose_update_check(const Eigen::Isometry3d& T_new, const Eigen::Isometry3d& T_old,
                       double lambda_update, double theta_update_deg)
{
  const double dt = (T_new.translation() - T_old.translation()).norm();
  const Eigen::AngleAxisd rot(T_new.linear().transpose() * T_old.linear());
  const double theta_deg = rot.angle() * 180.0 / EIGEN_PI;
  return dt > lambda_update || theta_deg > theta_update_deg;
}

} // namespace elmap
