#include <random>

#include <doctest.h>

#include "elmap/planner.hpp"
#include "elmap/synth.hpp"

using namespace elmap;

namespace {

SphericalSensorModel tiny_model()
{
  std::vector<float> elevation{0.3f, 0.1f, -0.1f, -0.3f};
  return {16, elevation, 0.3f, 20.0f};
}

PipelineConfig map_config()
{
  PipelineConfig config;
  config.voxel_dim = 0.1f;
  config.submap_dim = 26.0f;
  return config;
}

// Free box [min, max] with optional solid boxes, built directly at scale 0.
OccupancyMap build_map(const Eigen::Vector3f& min, const Eigen::Vector3f& max,
                       const std::vector<std::pair<Eigen::Vector3f, Eigen::Vector3f>>& solids)
{
  OccupancyMap map(map_config(), tiny_model(), Eigen::Vector3f::Constant(-12.8f));
  OccupancyTree& tree = map.tree();
  const Eigen::Vector3i v_min = tree.voxel_of(min);
  const Eigen::Vector3i v_max = tree.voxel_of(max);
  for (int bz = v_min.z() / 8; bz <= v_max.z() / 8; ++bz) {
    for (int by = v_min.y() / 8; by <= v_max.y() / 8; ++by) {
      for (int bx = v_min.x() / 8; bx <= v_max.x() / 8; ++bx) {
        auto* block = tree.allocate_block(Eigen::Vector3i(8 * bx, 8 * by, 8 * bz), 0);
        for (int z = 0; z < 8; ++z) {
          for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
              const Eigen::Vector3i voxel = block->base_coord() + Eigen::Vector3i(x, y, z);
              const Eigen::Vector3f centre = tree.cell_centre(voxel, 0);
              auto& cell = block->at(0, x, y, z);
              if ((centre.array() < min.array()).any() ||
                  (centre.array() > max.array()).any()) {
                continue; // outside the box: unknown
              }
              cell.observed = true;
              cell.log_odds = -2.0f;
              for (const auto& [lo, hi] : solids) {
                if ((centre.array() >= lo.array()).all() &&
                    (centre.array() <= hi.array()).all()) {
                  cell.log_odds = 3.0f;
                }
              }
            }
          }
        }
        refresh_occupancy_block(*block);
      }
    }
  }
  up_propagate(tree);
  return map;
}

} // namespace

TEST_CASE("is_free classifications")
{
  const OccupancyMap map = build_map({0.0f, 0.0f, 0.0f}, {10.0f, 10.0f, 3.0f},
                                     {{{4.5f, 4.5f, 0.0f}, {5.5f, 5.5f, 3.0f}}});
  const std::vector<const OccupancyMap*> maps{&map};

  // Deep inside scanned free space.
  CHECK(is_free({2.0f, 2.0f, 1.5f}, 0.3f, maps, UnknownSpacePolicy::kForbidden));
  // Inside the pillar.
  CHECK_FALSE(is_free({5.0f, 5.0f, 1.5f}, 0.3f, maps, UnknownSpacePolicy::kForbidden));
  // Unknown region outside the box.
  CHECK_FALSE(is_free({-5.0f, -5.0f, 1.5f}, 0.3f, maps, UnknownSpacePolicy::kForbidden));
  CHECK(is_free({-5.0f, -5.0f, 1.5f}, 0.3f, maps, UnknownSpacePolicy::kAllowed));
}

TEST_CASE("plan crosses an empty box near-optimally and deterministically")
{
  const OccupancyMap map = build_map({0.0f, 0.0f, 0.0f}, {10.0f, 10.0f, 3.0f}, {});
  const std::vector<const OccupancyMap*> maps{&map};
  PlannerConfig config;
  config.robot_radius = 0.3f;
  config.step_size = 0.6f;
  config.goal_tolerance = 0.3f;
  config.max_iterations = 10000;
  config.z_band = {{1.0f, 2.0f}};

  const Eigen::Vector3f start(1.0f, 1.0f, 1.5f);
  const Eigen::Vector3f goal(1.0f + 8.0f * 0.6f, 1.0f + 8.0f * 0.8f, 1.5f); // 8 m away
  const PlanResult result = plan(start, goal, maps, config, 12345);
  REQUIRE(result.success);
  CHECK(result.path.length <= 8.0 * 1.05 + config.goal_tolerance);

  SUBCASE("deterministic for a fixed seed")
  {
    const PlanResult again = plan(start, goal, maps, config, 12345);
    REQUIRE(again.success);
    REQUIRE(again.path.waypoints.size() == result.path.waypoints.size());
    for (std::size_t i = 0; i < result.path.waypoints.size(); ++i) {
      CHECK(again.path.waypoints[i] == result.path.waypoints[i]);
    }
  }

  SUBCASE("best cost is non-increasing over iterations")
  {
    for (std::size_t i = 1; i < result.best_cost_history.size(); ++i) {
      REQUIRE(result.best_cost_history[i] <= result.best_cost_history[i - 1] + 1e-9);
    }
  }

  SUBCASE("every returned segment passes is_free at half-radius density")
  {
    for (std::size_t i = 0; i + 1 < result.path.waypoints.size(); ++i) {
      const Eigen::Vector3f a = result.path.waypoints[i];
      const Eigen::Vector3f b = result.path.waypoints[i + 1];
      const int steps =
          std::max(1, static_cast<int>(std::ceil((b - a).norm() / (0.5f * config.robot_radius))));
      for (int s = 0; s <= steps; ++s) {
        const float t = static_cast<float>(s) / steps;
        REQUIRE(is_free(a + t * (b - a), config.robot_radius, maps, config.unknown_space));
      }
    }
  }
}

TEST_CASE("plan around a pillar: longer than the straight line, still free")
{
  const OccupancyMap map = build_map({0.0f, 0.0f, 0.0f}, {10.0f, 10.0f, 3.0f},
                                     {{{4.0f, 3.0f, 0.0f}, {6.0f, 7.0f, 3.0f}}});
  const std::vector<const OccupancyMap*> maps{&map};
  PlannerConfig config;
  config.robot_radius = 0.3f;
  config.step_size = 0.6f;
  config.max_iterations = 8000;
  config.z_band = {{1.0f, 2.0f}};

  const Eigen::Vector3f start(2.0f, 5.0f, 1.5f);
  const Eigen::Vector3f goal(8.0f, 5.0f, 1.5f);
  const PlanResult result = plan(start, goal, maps, config, 99);
  REQUIRE(result.success);
  const double straight = (goal - start).norm();
  CHECK(result.path.length > straight + 0.2);
  for (const auto& w : result.path.waypoints) {
    CHECK(is_free(w, config.robot_radius, maps, config.unknown_space));
  }
}

TEST_CASE("goal inside a wall fails, start inside a wall throws")
{
  const OccupancyMap map = build_map({0.0f, 0.0f, 0.0f}, {10.0f, 10.0f, 3.0f},
                                     {{{4.5f, 4.5f, 0.0f}, {5.5f, 5.5f, 3.0f}}});
  const std::vector<const OccupancyMap*> maps{&map};
  PlannerConfig config;
  config.max_iterations = 500;
  config.z_band = {{1.0f, 2.0f}};

  const PlanResult result = plan({1.0f, 1.0f, 1.5f}, {5.0f, 5.0f, 1.5f}, maps, config, 7);
  CHECK_FALSE(result.success);
  CHECK(result.path.empty());

  CHECK_THROWS_AS(plan({5.0f, 5.0f, 1.5f}, {1.0f, 1.0f, 1.5f}, maps, config, 7),
                  std::invalid_argument);
}
