#include "elmap/synth.hpp"

#include <algorithm>
#include <cmath>

namespace elmap {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

// Slab intersection: returns [t_enter, t_exit] of the ray with the box.
bool box_interval(const Eigen::Vector3f& origin, const Eigen::Vector3f& dir,
                  const Eigen::Vector3f& min, const Eigen::Vector3f& max, float& t_enter,
                  float& t_exit)
{
  t_enter = -kInf;
  t_exit = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-12f) {
      if (origin[a] < min[a] || origin[a] > max[a]) {
        return false;
      }
      continue;
    }
    float t0 = (min[a] - origin[a]) / dir[a];
    float t1 = (max[a] - origin[a]) / dir[a];
    if (t0 > t1) {
      std::swap(t0, t1);
    }
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) {
      return false;
    }
  }
  return true;
}

float box_distance(const Eigen::Vector3f& p, const Eigen::Vector3f& min,
                   const Eigen::Vector3f& max)
{
  // Unsigned distance to the box boundary (interior gives distance to the
  // nearest face).
  const Eigen::Vector3f d_out = (min - p).cwiseMax(p - max);
  const float outside = d_out.cwiseMax(0.0f).norm();
  const float inside = d_out.maxCoeff();
  return outside > 0.0f ? outside : -inside;
}

} // namespace

Scene Scene::box_room(const Eigen::Vector3f& min, const Eigen::Vector3f& max)
{
  Scene scene;
  scene.add_room(min, max);
  return scene;
}

void Scene::add_room(const Eigen::Vector3f& min, const Eigen::Vector3f& max)
{
  boxes_.push_back({min, max, true});
}

void Scene::add_obstacle(const Eigen::Vector3f& min, const Eigen::Vector3f& max)
{
  boxes_.push_back({min, max, false});
}

void Scene::add_cylinder(const Eigen::Vector2f& centre_xy, float radius, float z_min, float z_max)
{
  cylinders_.push_back({centre_xy, radius, z_min, z_max});
}

float Scene::ray_hit(const Eigen::Vector3f& origin, const Eigen::Vector3f& direction) const
{
  float best = kInf;
  for (const Box& box : boxes_) {
    float t0, t1;
    if (!box_interval(origin, direction, box.min, box.max, t0, t1)) {
      continue;
    }
    if (box.hollow) {
      if (t1 > 1e-6f) {
        best = std::min(best, t1); // exit point seen from inside
      }
    } else {
      if (t0 > 1e-6f) {
        best = std::min(best, t0);
      }
    }
  }
  for (const Cylinder& cyl : cylinders_) {
    const Eigen::Vector2f o = origin.head<2>() - cyl.centre;
    const Eigen::Vector2f d = direction.head<2>();
    const float a = d.squaredNorm();
    if (a < 1e-12f) {
      continue;
    }
    const float b = 2.0f * o.dot(d);
    const float c = o.squaredNorm() - cyl.radius * cyl.radius;
    const float disc = b * b - 4.0f * a * c;
    if (disc < 0.0f) {
      continue;
    }
    const float sq = std::sqrt(disc);
    for (float t : {(-b - sq) / (2.0f * a), (-b + sq) / (2.0f * a)}) {
      if (t > 1e-6f && t < best) {
        const float z = origin.z() + t * direction.z();
        if (z >= cyl.z_min && z <= cyl.z_max) {
          best = t;
          break;
        }
      }
    }
  }
  return best;
}

float Scene::distance_to_surface(const Eigen::Vector3f& point) const
{
  float best = kInf;
  for (const Box& box : boxes_) {
    best = std::min(best, std::abs(box_distance(point, box.min, box.max)));
  }
  for (const Cylinder& cyl : cylinders_) {
    const float radial = std::abs((point.head<2>() - cyl.centre).norm() - cyl.radius);
    if (point.z() >= cyl.z_min && point.z() <= cyl.z_max) {
      best = std::min(best, radial);
    }
  }
  return best;
}

std::vector<Eigen::Vector3f> Scene::sample_surface(std::size_t count, std::mt19937_64& rng) const
{
  // Area-weighted sampling over box faces.
  struct Face {
    Eigen::Vector3f origin;
    Eigen::Vector3f u;
    Eigen::Vector3f v;
    float area;
  };
  std::vector<Face> faces;
  float total_area = 0.0f;
  for (const Box& box : boxes_) {
    const Eigen::Vector3f size = box.max - box.min;
    for (int axis = 0; axis < 3; ++axis) {
      for (int side = 0; side < 2; ++side) {
        Face f;
        f.origin = box.min;
        if (side == 1) {
          f.origin[axis] += size[axis];
        }
        const int a1 = (axis + 1) % 3;
        const int a2 = (axis + 2) % 3;
        f.u = Eigen::Vector3f::Zero();
        f.v = Eigen::Vector3f::Zero();
        f.u[a1] = size[a1];
        f.v[a2] = size[a2];
        f.area = size[a1] * size[a2];
        faces.push_back(f);
        total_area += f.area;
      }
    }
  }
  std::vector<Eigen::Vector3f> points;
  points.reserve(count);
  if (faces.empty() || total_area <= 0.0f) {
    return points;
  }
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    float pick = uni(rng) * total_area;
    std::size_t f = 0;
    while (f + 1 < faces.size() && pick > faces[f].area) {
      pick -= faces[f].area;
      ++f;
    }
    points.push_back(faces[f].origin + uni(rng) * faces[f].u + uni(rng) * faces[f].v);
  }
  return points;
}

OrganizedCloud synth_scan(const Scene& scene, const SphericalSensorModel& model,
                          const Eigen::Isometry3d& T_map_from_lidar, float range_noise_sigma,
                          std::uint64_t seed)
{
  OrganizedCloud cloud(model.width(), model.height());
  const Eigen::Isometry3f T = T_map_from_lidar.cast<float>();
  const Eigen::Vector3f origin = T.translation();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, range_noise_sigma);
  for (int row = 0; row < model.height(); ++row) {
    for (int col = 0; col < model.width(); ++col) {
      const Eigen::Vector3f dir_lidar = model.ray_direction(row, col);
      const Eigen::Vector3f dir_map = T.linear() * dir_lidar;
      float t = scene.ray_hit(origin, dir_map);
      if (!std::isfinite(t)) {
        // No return within the scene: report beyond max range so the
        // conversion clamps it into a free-space-only ray.
        t = 2.0f * model.max_range();
      } else if (range_noise_sigma > 0.0f) {
        t = std::max(1e-3f, t + noise(rng));
      }
      cloud.at(row, col) = dir_lidar * t;
    }
  }
  return cloud;
}

} // namespace elmap
