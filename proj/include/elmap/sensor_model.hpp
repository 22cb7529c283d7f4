#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace elmap {

/// Spherical camera model of a multi-beam LiDAR: one azimuth angle per column
/// and one elevation angle per row. Horizontal FoV is a full 360 degrees with
/// uniformly spaced columns; rows follow the (strictly decreasing) elevation
/// table. Immutable after construction, safe for concurrent reads.
class SphericalSensorModel {
 public:
  SphericalSensorModel(int width,
                       std::vector<float> elevation_rad,
                       float min_range,
                       float max_range,
                       float min_ray_angle = -1.0f); // <0: derive from elevation gaps

  /// Nominal Ouster OS1-64: 64x1024 pixels, 33.2 deg vertical FoV.
  static SphericalSensorModel os1_64(float min_range = 0.5f, float max_range = 60.0f);

  /// Key/value text config (width, height, ranges, beam table).
  static SphericalSensorModel load(const std::string& path);
  void save(const std::string& path) const;

  int width() const { return width_; }
  int height() const { return static_cast<int>(elevation_.size()); }
  float min_range() const { return min_range_; }
  float max_range() const { return max_range_; }

  /// Minimum angle between adjacent rays along the sparse (vertical) axis by
  /// default; drives integration-scale selection.
  float min_ray_angle() const { return min_ray_angle_; }

  float azimuth(int col) const;
  float elevation(int row) const { return elevation_[row]; }

  /// Elevation range accepted by nearest-row assignment (table ends extended
  /// by half the adjacent gap).
  float elevation_min() const { return elevation_accept_min_; }
  float elevation_max() const { return elevation_accept_max_; }

  int col_of_azimuth(float azimuth) const;      // always valid (wraps)
  int row_of_elevation(float elevation) const;  // -1 outside the vertical FoV

  /// Projects a sensor-frame point to its nearest pixel. Returns false when
  /// the point is outside the vertical FoV or too close to the origin.
  bool project(const Eigen::Vector3f& point, int& row, int& col, float& range) const;

  /// Inverse projection: d * (cos e cos a, cos e sin a, sin e).
  Eigen::Vector3f backproject(int row, int col, float d) const;
  Eigen::Vector3f ray_direction(int row, int col) const { return backproject(row, col, 1.0f); }

 private:
  int width_;
  std::vector<float> elevation_; // strictly decreasing, radians
  float min_range_;
  float max_range_;
  float min_ray_angle_;
  float azimuth_step_;
  float elevation_accept_min_;
  float elevation_accept_max_;
};

enum class PixelState : std::uint8_t {
  kInvalid = 0, // dropout, non-finite or below min_range
  kValid = 1,
  kClamped = 2, // measured beyond max_range, clamped; free-space-only ray
};

/// Range image (along-ray distance in meters) with per-pixel validity.
/// Invalid pixels are masked, never zero-filled.
class DepthImage {
 public:
  DepthImage(int width, int height)
      : width_(width), height_(height), depth_(static_cast<std::size_t>(width) * height, 0.0f),
        state_(static_cast<std::size_t>(width) * height, PixelState::kInvalid)
  {
  }

  int width() const { return width_; }
  int height() const { return height_; }

  float depth(int row, int col) const { return depth_[index(row, col)]; }
  PixelState state(int row, int col) const { return state_[index(row, col)]; }
  bool valid(int row, int col) const { return state(row, col) != PixelState::kInvalid; }

  void set(int row, int col, float d, PixelState state)
  {
    depth_[index(row, col)] = d;
    state_[index(row, col)] = state;
  }

 private:
  std::size_t index(int row, int col) const
  {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int width_;
  int height_;
  std::vector<float> depth_;
  std::vector<PixelState> state_;
};

/// Fixed-size row-major point grid in the LiDAR frame, laid out to match the
/// sensor model tables (row = beam, column = azimuth step).
class OrganizedCloud {
 public:
  OrganizedCloud(int width, int height)
      : width_(width), height_(height),
        points_(static_cast<std::size_t>(width) * height, Eigen::Vector3f::Zero())
  {
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return points_.size(); }

  Eigen::Vector3f& at(int row, int col) { return points_[static_cast<std::size_t>(row) * width_ + col]; }
  const Eigen::Vector3f& at(int row, int col) const
  {
    return points_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::vector<Eigen::Vector3f>& points() { return points_; }
  const std::vector<Eigen::Vector3f>& points() const { return points_; }

 private:
  int width_;
  int height_;
  std::vector<Eigen::Vector3f> points_;
};

/// Converts an organized cloud to a range image. Each valid point stores its
/// norm at its own (row, col); non-finite, zero or sub-min-range points are
/// masked. Ranges beyond max_range are clamped and flagged, which downstream
/// means "free along the ray, no surface" for occupancy and "masked" for TSDF.
DepthImage cloud_to_depth_image(const OrganizedCloud& cloud, const SphericalSensorModel& model);

/// Largest scale s in [0, max_scale] whose cell side voxel_dim * 2^s still
/// fits the ray-cone diameter d_r * min_ray_angle (small-angle approximation);
/// 0 when none fits.
int select_integration_scale(float d_r, float min_ray_angle, float voxel_dim, int max_scale = 3);

} // namespace elmap
