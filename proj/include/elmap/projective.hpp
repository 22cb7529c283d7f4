#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "elmap/octree.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap {

/// Per-scan integration counters.
struct IntegrationStats {
  long rays_valid = 0;
  long rays_invalid = 0;
  long rays_clamped = 0; // beyond max range, free-space only
  long rays_surface_out_of_bounds = 0;
  long blocks_touched = 0;
  long blocks_allocated = 0;
  long node_free_updates = 0;
  std::array<long, 4> cells_updated{0, 0, 0, 0};
  double wall_ms = 0.0;
};

/// Min/max mip pyramid over a depth image for conservative visibility tests
/// on pixel rectangles. Clamped (beyond-max-range) pixels contribute their
/// clamped depth; invalid pixels only raise the invalid flag.
class DepthPooling {
 public:
  struct Tile {
    float min_d = std::numeric_limits<float>::infinity();
    float max_d = -std::numeric_limits<float>::infinity();
    bool has_invalid = false;

    bool all_invalid() const { return !(min_d <= max_d); }

    void merge(const Tile& o)
    {
      min_d = std::min(min_d, o.min_d);
      max_d = std::max(max_d, o.max_d);
      has_invalid |= o.has_invalid;
    }
  };

  explicit DepthPooling(const DepthImage& image);

  /// Conservative aggregate over rows [r0, r1] and columns [c0, c1]; the
  /// column interval may extend past the image width (azimuth wrap) or be
  /// given unclamped, it is wrapped internally.
  Tile query(int r0, int r1, int c0, int c1) const;

  int width() const { return width_; }
  int height() const { return height_; }

 private:
  Tile query_span(int r0, int r1, int c0, int c1) const;

  int width_;
  int height_;
  std::vector<std::vector<Tile>> levels_;
  std::vector<int> level_w_;
  std::vector<int> level_h_;
};

enum class CubeAction {
  kSkip,      // no cell in the cube can receive an update
  kFullyFree, // every cell center receives exactly the constant free increment
  kDescend,   // mixed: recurse / update per cell
};

/// Conservative classification of an axis-aligned cube (submap frame) against
/// a depth image. The cube is bounded by its circumscribed sphere; pixel
/// footprints are rounded outward, so kSkip and kFullyFree are only returned
/// when they hold for every cell center inside the cube.
class CubeClassifier {
 public:
  /// behind_margin: band extent behind the surface. front_margin: with
  /// free-space tracking on, the plateau margin in front of the surface where
  /// the measurement is exactly the free constant; with it off (band-only
  /// TSDF), the band extent in front of the surface, beyond which cubes are
  /// skipped.
  CubeClassifier(const SphericalSensorModel& model,
                 const DepthImage& image,
                 const Eigen::Isometry3f& T_sensor_from_map,
                 float behind_margin,
                 float front_margin,
                 bool track_free_space)
      : model_(model), pooling_(image), T_LS_(T_sensor_from_map),
        behind_margin_(behind_margin), front_margin_(front_margin),
        track_free_space_(track_free_space)
  {
  }

  CubeAction classify(const Eigen::Vector3f& centre_map, float half_side_m) const
  {
    const Eigen::Vector3f c = T_LS_ * centre_map;
    const float rho = half_side_m * 1.7320508f; // circumscribed sphere
    const float r = c.norm();
    if (r <= rho + 1e-6f) {
      return CubeAction::kDescend; // sensor inside or touching the cube
    }
    const float alpha = std::asin(std::min(1.0f, rho / r));
    const float r_xy = c.head<2>().norm();
    const float e_c = std::atan2(c.z(), r_xy);
    const float e_lo = e_c - alpha;
    const float e_hi = e_c + alpha;
    if (e_lo > model_.elevation_max() || e_hi < model_.elevation_min()) {
      return CubeAction::kSkip; // entirely outside the vertical FoV
    }

    int r0 = row_clamped(e_hi) - 1;
    int r1 = row_clamped(e_lo) + 1;
    r0 = std::max(r0, 0);
    r1 = std::min(r1, pooling_.height() - 1);

    int c0 = 0;
    int c1 = pooling_.width() - 1;
    if (rho < r_xy) {
      // The sphere projects to a disc of radius rho around c in the xy plane.
      const float da = std::asin(std::min(1.0f, rho / r_xy));
      const float a_c = std::atan2(c.y(), c.x());
      c0 = col_floor(a_c + da) - 1;
      c1 = col_ceil(a_c - da) + 1;
      if (c1 - c0 + 1 >= pooling_.width()) {
        c0 = 0;
        c1 = pooling_.width() - 1;
      }
    }

    const DepthPooling::Tile tile = pooling_.query(r0, r1, c0, c1);
    if (tile.all_invalid()) {
      return CubeAction::kSkip;
    }
    const float d_min = r - rho;
    const float d_max = r + rho;
    if (d_min > tile.max_d + behind_margin_) {
      return CubeAction::kSkip; // fully behind every measured band
    }
    const bool inside_fov = e_lo >= model_.elevation_min() && e_hi <= model_.elevation_max();
    if (track_free_space_) {
      if (!tile.has_invalid && inside_fov && d_max <= tile.min_d - front_margin_) {
        return CubeAction::kFullyFree;
      }
    } else {
      // Band-only pipeline: cubes fully in front of every band are untouched.
      if (d_max < tile.min_d - front_margin_) {
        return CubeAction::kSkip;
      }
    }
    return CubeAction::kDescend;
  }

  const DepthPooling& pooling() const { return pooling_; }

 private:
  int row_clamped(float elevation) const
  {
    const int row = model_.row_of_elevation(
        std::clamp(elevation, model_.elevation_min(), model_.elevation_max()));
    return std::clamp(row, 0, model_.height() - 1);
  }

  // Continuous column coordinates of an azimuth, unwrapped (may be negative).
  int col_floor(float azimuth) const
  {
    const float c = (3.14159265f - azimuth) / (2.0f * 3.14159265f) * model_.width() - 0.5f;
    return static_cast<int>(std::floor(c));
  }
  int col_ceil(float azimuth) const
  {
    const float c = (3.14159265f - azimuth) / (2.0f * 3.14159265f) * model_.width() - 0.5f;
    return static_cast<int>(std::ceil(c));
  }

  const SphericalSensorModel& model_;
  DepthPooling pooling_;
  Eigen::Isometry3f T_LS_;
  float behind_margin_;
  float front_margin_;
  bool track_free_space_;
};

/// Throws unless the rotation part is orthonormal with determinant +1.
void require_rigid(const Eigen::Isometry3f& T, const char* what);

} // namespace elmap
