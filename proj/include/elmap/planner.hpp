#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "elmap/occupancy.hpp"

namespace elmap {

enum class UnknownSpacePolicy { kForbidden, kAllowed };

struct PlannerConfig {
  float robot_radius = 0.3f;   // meters
  float step_size = 0.5f;      // steering step, meters
  float goal_tolerance = 0.3f; // meters
  int max_iterations = 10000;
  float rewire_gamma = 10.0f;  // near radius = gamma * (log n / n)^(1/3)
  float goal_bias = 0.05f;     // fraction of samples drawn at the goal
  UnknownSpacePolicy unknown_space = UnknownSpacePolicy::kForbidden;
  std::optional<std::pair<float, float>> z_band; // optional planar constraint
};

struct Path {
  std::vector<Eigen::Vector3f> waypoints;
  double length = 0.0;

  bool empty() const { return waypoints.empty(); }
};

struct PlanResult {
  Path path;                     // empty on failure
  bool success = false;
  int iterations = 0;
  std::vector<double> best_cost_history; // best goal cost per iteration (inf until reached)
};

/// Collision oracle over a submap collection: a ball is free when no submap
/// reports occupied space inside it and (unless unknown space is allowed) at
/// least one submap observed the whole ball free. Coarse node aggregates
/// short-circuit the per-cell descent.
bool is_free(const Eigen::Vector3f& point,
             float radius,
             const std::vector<const OccupancyMap*>& maps,
             UnknownSpacePolicy policy);

/// RRT* over the submaps' occupancy. Deterministic for a fixed seed. Throws
/// when the start is in collision; an unreachable goal yields failure.
PlanResult plan(const Eigen::Vector3f& start,
                const Eigen::Vector3f& goal,
                const std::vector<const OccupancyMap*>& maps,
                const PlannerConfig& config,
                std::uint64_t seed);

} // namespace elmap
