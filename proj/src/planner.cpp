#include "elmap/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace elmap {

bool is_free(const Eigen::Vector3f& point, float radius,
             const std::vector<const OccupancyMap*>& maps, UnknownSpacePolicy policy)
{
  bool any_fully_free = false;
  for (const OccupancyMap* map : maps) {
    switch (map->classify_ball(point, radius)) {
      case Occupancy::kOccupied:
        return false;
      case Occupancy::kFree:
        any_fully_free = true;
        break;
      case Occupancy::kUnknown:
        break;
    }
  }
  return policy == UnknownSpacePolicy::kAllowed || any_fully_free;
}

namespace {

struct TreeNode {
  Eigen::Vector3f position;
  int parent = -1;
  double cost = 0.0;
};

// Bounds of everything observed in a map: allocated blocks plus whole-cube
// data stored on node slots (coarse free space lives there, not in blocks).
void extend_content_bounds(const OccupancyTree& tree, const OctreeNode<OccupancyVoxel>* node,
                           const Eigen::Vector3i& base, int depth, Eigen::Vector3f& lo,
                           Eigen::Vector3f& hi)
{
  const int child_side = tree.voxels_per_side() >> (depth + 1);
  for (int slot = 0; slot < 8; ++slot) {
    const Eigen::Vector3i child_base =
        base + child_side * Eigen::Vector3i(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1);
    bool covered = false;
    if (node->child_node[slot] != nullptr) {
      extend_content_bounds(tree, node->child_node[slot], child_base, depth + 1, lo, hi);
    } else if (node->child_block[slot] != nullptr || node->child_data[slot].is_observed()) {
      covered = true;
    }
    if (covered) {
      const Eigen::Vector3f cube_lo =
          tree.origin() + tree.voxel_dim() * child_base.cast<float>();
      lo = lo.cwiseMin(cube_lo);
      hi = hi.cwiseMax(cube_lo + Eigen::Vector3f::Constant(tree.voxel_dim() * child_side));
    }
  }
}

// Segment check at a sampling density of half the robot radius.
bool segment_free(const Eigen::Vector3f& a, const Eigen::Vector3f& b, float radius,
                  const std::vector<const OccupancyMap*>& maps, UnknownSpacePolicy policy)
{
  const float length = (b - a).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(length / (0.5f * radius))));
  for (int i = 0; i <= steps; ++i) {
    const float t = static_cast<float>(i) / static_cast<float>(steps);
    if (!is_free(a + t * (b - a), radius, maps, policy)) {
      return false;
    }
  }
  return true;
}

} // namespace

PlanResult plan(const Eigen::Vector3f& start, const Eigen::Vector3f& goal,
                const std::vector<const OccupancyMap*>& maps, const PlannerConfig& config,
                std::uint64_t seed)
{
  if (maps.empty()) {
    throw std::invalid_argument("plan: no maps");
  }
  if (!is_free(start, config.robot_radius, maps, config.unknown_space)) {
    throw std::invalid_argument("plan: start is in collision");
  }

  // Sampling volume: union of the maps' observed content, optionally
  // z-banded. The raw octree volumes are cubes mostly made of unknown space.
  Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity());
  Eigen::Vector3f hi = -lo;
  for (const OccupancyMap* map : maps) {
    extend_content_bounds(map->tree(), map->tree().root(), Eigen::Vector3i::Zero(), 0, lo, hi);
  }
  if (!(lo.x() <= hi.x())) {
    return {}; // nothing observed anywhere
  }
  lo = lo.cwiseMin(start.cwiseMin(goal));
  hi = hi.cwiseMax(start.cwiseMax(goal));
  if (config.z_band) {
    lo.z() = std::max(lo.z(), config.z_band->first);
    hi.z() = std::min(hi.z(), config.z_band->second);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  auto sample = [&]() -> Eigen::Vector3f {
    if (uni(rng) < config.goal_bias) {
      return goal;
    }
    return {lo.x() + uni(rng) * (hi.x() - lo.x()), lo.y() + uni(rng) * (hi.y() - lo.y()),
            lo.z() + uni(rng) * (hi.z() - lo.z())};
  };

  std::vector<TreeNode> nodes;
  nodes.push_back({start, -1, 0.0});
  int best_goal_node = -1;
  double best_goal_cost = std::numeric_limits<double>::infinity();

  PlanResult result;
  result.best_cost_history.reserve(config.max_iterations);

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const Eigen::Vector3f target = sample();

    int nearest = 0;
    float nearest_sq = std::numeric_limits<float>::infinity();
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
      const float d = (nodes[i].position - target).squaredNorm();
      if (d < nearest_sq) {
        nearest_sq = d;
        nearest = i;
      }
    }

    Eigen::Vector3f direction = target - nodes[nearest].position;
    const float distance = direction.norm();
    if (distance < 1e-6f) {
      result.best_cost_history.push_back(best_goal_cost);
      continue;
    }
    const Eigen::Vector3f new_pos =
        nodes[nearest].position + direction * (std::min(distance, config.step_size) / distance);
    if (!segment_free(nodes[nearest].position, new_pos, config.robot_radius, maps,
                      config.unknown_space)) {
      result.best_cost_history.push_back(best_goal_cost);
      continue;
    }

    // Near set for choose-parent and rewiring.
    const float n = static_cast<float>(nodes.size()) + 1.0f;
    const float radius = std::min(
        config.rewire_gamma * std::cbrt(std::log(n + 1.0f) / n), 4.0f * config.step_size);
    std::vector<int> near;
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
      if ((nodes[i].position - new_pos).norm() <= radius) {
        near.push_back(i);
      }
    }

    int parent = nearest;
    double cost = nodes[nearest].cost + (new_pos - nodes[nearest].position).norm();
    for (int i : near) {
      const double c = nodes[i].cost + (new_pos - nodes[i].position).norm();
      if (c < cost &&
          segment_free(nodes[i].position, new_pos, config.robot_radius, maps,
                       config.unknown_space)) {
        parent = i;
        cost = c;
      }
    }
    const int new_index = static_cast<int>(nodes.size());
    nodes.push_back({new_pos, parent, cost});

    for (int i : near) {
      const double c = cost + (nodes[i].position - new_pos).norm();
      if (c < nodes[i].cost &&
          segment_free(new_pos, nodes[i].position, config.robot_radius, maps,
                       config.unknown_space)) {
        nodes[i].parent = new_index;
        nodes[i].cost = c;
      }
    }

    if ((new_pos - goal).norm() <= config.goal_tolerance) {
      if (cost < best_goal_cost) {
        best_goal_cost = cost;
        best_goal_node = new_index;
      }
    }
    // Rewiring can shorten the path to an already-connected goal node.
    if (best_goal_node >= 0) {
      best_goal_cost = std::min(best_goal_cost, nodes[best_goal_node].cost);
    }
    result.best_cost_history.push_back(best_goal_cost);
    ++result.iterations;
  }

  if (best_goal_node < 0) {
    return result;
  }
  std::vector<Eigen::Vector3f> waypoints;
  for (int i = best_goal_node; i >= 0; i = nodes[i].parent) {
    waypoints.push_back(nodes[i].position);
  }
  std::reverse(waypoints.begin(), waypoints.end());
  result.path.length = 0.0;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    result.path.length += (waypoints[i + 1] - waypoints[i]).norm();
  }
  result.path.waypoints = std::move(waypoints);
  result.success = true;
  return result;
}

} // namespace elmap
