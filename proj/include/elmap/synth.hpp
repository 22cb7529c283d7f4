#pragma once

#include <limits>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "elmap/sensor_model.hpp"

namespace elmap {

/// Analytic test environment built from axis-aligned boxes (rooms are hollow,
/// obstacles solid) and vertical cylinders. Supports exact ray casting,
/// distance-to-surface queries and surface sampling; used to synthesize scans
/// for benchmarks and ground-truth clouds.
class Scene {
 public:
  /// Hollow room: rays starting inside hit the walls from within.
  static Scene box_room(const Eigen::Vector3f& min, const Eigen::Vector3f& max);

  void add_room(const Eigen::Vector3f& min, const Eigen::Vector3f& max);
  void add_obstacle(const Eigen::Vector3f& min, const Eigen::Vector3f& max);
  void add_cylinder(const Eigen::Vector2f& centre_xy, float radius, float z_min, float z_max);

  /// Nearest positive hit distance along origin + t * direction, +inf if the
  /// ray escapes.
  float ray_hit(const Eigen::Vector3f& origin, const Eigen::Vector3f& direction) const;

  /// Unsigned distance from a point to the scene surface.
  float distance_to_surface(const Eigen::Vector3f& point) const;

  /// Uniform-ish surface samples (for ground-truth clouds).
  std::vector<Eigen::Vector3f> sample_surface(std::size_t count, std::mt19937_64& rng) const;

 private:
  struct Box {
    Eigen::Vector3f min;
    Eigen::Vector3f max;
    bool hollow = false; // hollow: hit from inside; solid: hit from outside
  };
  struct Cylinder {
    Eigen::Vector2f centre;
    float radius;
    float z_min;
    float z_max;
  };

  std::vector<Box> boxes_;
  std::vector<Cylinder> cylinders_;
};

/// Casts one organized scan of the scene from the given LiDAR pose. Rays that
/// escape the scene are reported beyond max range (clamped downstream);
/// optional Gaussian range noise.
OrganizedCloud synth_scan(const Scene& scene,
                          const SphericalSensorModel& model,
                          const Eigen::Isometry3d& T_map_from_lidar,
                          float range_noise_sigma = 0.0f,
                          std::uint64_t seed = 0);

} // namespace elmap
