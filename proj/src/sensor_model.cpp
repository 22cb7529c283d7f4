#include "elmap/sensor_model.hpp"

#include "elmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace elmap {

namespace {
constexpr float kPi = std::numbers::pi_v<float>;
}

SphericalSensorModel::SphericalSensorModel(int width,
                                           std::vector<float> elevation_rad,
                                           float min_range,
                                           float max_range,
                                           float min_ray_angle)
    : width_(width), elevation_(std::move(elevation_rad)), min_range_(min_range),
      max_range_(max_range), min_ray_angle_(min_ray_angle)
{
  if (width_ < 1 || elevation_.size() < 2) {
    throw std::invalid_argument("SphericalSensorModel: need >=1 column and >=2 rows");
  }
  if (min_range_ < 0.0f || max_range_ <= min_range_) {
    throw std::invalid_argument("SphericalSensorModel: invalid range bounds");
  }
  for (std::size_t r = 1; r < elevation_.size(); ++r) {
    if (elevation_[r] >= elevation_[r - 1]) {
      throw std::invalid_argument("SphericalSensorModel: elevations must strictly decrease");
    }
  }
  azimuth_step_ = 2.0f * kPi / static_cast<float>(width_);
  const float first_gap = elevation_[0] - elevation_[1];
  const float last_gap = elevation_[elevation_.size() - 2] - elevation_.back();
  elevation_accept_max_ = elevation_.front() + 0.5f * first_gap;
  elevation_accept_min_ = elevation_.back() - 0.5f * last_gap;
  if (min_ray_angle_ <= 0.0f) {
    // Default to the sparse (vertical) axis: the minimum adjacent-row gap.
    float min_gap = first_gap;
    for (std::size_t r = 1; r < elevation_.size(); ++r) {
      min_gap = std::min(min_gap, elevation_[r - 1] - elevation_[r]);
    }
    min_ray_angle_ = min_gap;
  }
}

SphericalSensorModel SphericalSensorModel::os1_64(float min_range, float max_range)
{
  constexpr int rows = 64;
  constexpr float fov_deg = 33.2f;
  std::vector<float> elevation(rows);
  const float top = 0.5f * fov_deg * kPi / 180.0f;
  const float step = fov_deg / (rows - 1) * kPi / 180.0f;
  for (int r = 0; r < rows; ++r) {
    elevation[r] = top - step * static_cast<float>(r);
  }
  return {1024, std::move(elevation), min_range, max_range};
}

float SphericalSensorModel::azimuth(int col) const
{
  return kPi - (static_cast<float>(col) + 0.5f) * azimuth_step_;
}

int SphericalSensorModel::col_of_azimuth(float azimuth) const
{
  const float c = (kPi - azimuth) / azimuth_step_ - 0.5f;
  int col = static_cast<int>(std::lround(c)) % width_;
  if (col < 0) {
    col += width_;
  }
  return col;
}

int SphericalSensorModel::row_of_elevation(float elevation) const
{
  if (elevation > elevation_accept_max_ || elevation < elevation_accept_min_) {
    return -1;
  }
  // Nearest row in the strictly decreasing table.
  const auto it = std::lower_bound(elevation_.begin(), elevation_.end(), elevation,
                                   [](float row_e, float e) { return row_e > e; });
  if (it == elevation_.begin()) {
    return 0;
  }
  if (it == elevation_.end()) {
    return height() - 1;
  }
  const int below = static_cast<int>(it - elevation_.begin());
  const int above = below - 1;
  return (elevation_[above] - elevation) <= (elevation - elevation_[below]) ? above : below;
}

bool SphericalSensorModel::project(const Eigen::Vector3f& point, int& row, int& col,
                                   float& range) const
{
  range = point.norm();
  if (range < 1e-6f) {
    return false;
  }
  const float e = std::atan2(point.z(), point.head<2>().norm());
  row = row_of_elevation(e);
  if (row < 0) {
    return false;
  }
  col = col_of_azimuth(std::atan2(point.y(), point.x()));
  return true;
}

Eigen::Vector3f SphericalSensorModel::backproject(int row, int col, float d) const
{
  const float a = azimuth(col);
  const float e = elevation_[row];
  const float ce = std::cos(e);
  return d * Eigen::Vector3f(ce * std::cos(a), ce * std::sin(a), std::sin(e));
}

SphericalSensorModel SphericalSensorModel::load(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw InputError("SphericalSensorModel: cannot open " + path);
  }
  int width = 0, height = 0;
  float min_range = 0.5f, max_range = 60.0f, min_ray_angle = -1.0f;
  float vertical_fov_deg = 0.0f;
  std::vector<float> elevation_deg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "width") {
      ss >> width;
    } else if (key == "height") {
      ss >> height;
    } else if (key == "min_range") {
      ss >> min_range;
    } else if (key == "max_range") {
      ss >> max_range;
    } else if (key == "min_ray_angle_rad") {
      ss >> min_ray_angle;
    } else if (key == "vertical_fov_deg") {
      ss >> vertical_fov_deg;
    } else if (key == "elevation_deg") {
      float v;
      while (ss >> v) {
        elevation_deg.push_back(v);
      }
    } else {
      throw InputError("SphericalSensorModel: unknown key '" + key + "' at line " +
                               std::to_string(line_no));
    }
    if (!ss && !ss.eof()) {
      throw InputError("SphericalSensorModel: malformed value at line " +
                               std::to_string(line_no));
    }
  }
  std::vector<float> elevation;
  if (!elevation_deg.empty()) {
    if (height != 0 && height != static_cast<int>(elevation_deg.size())) {
      throw InputError("SphericalSensorModel: height does not match beam table");
    }
    elevation.reserve(elevation_deg.size());
    for (float deg : elevation_deg) {
      elevation.push_back(deg * kPi / 180.0f);
    }
  } else {
    if (height < 2 || vertical_fov_deg <= 0.0f) {
      throw InputError("SphericalSensorModel: need elevation_deg or height + vertical_fov_deg");
    }
    const float top = 0.5f * vertical_fov_deg * kPi / 180.0f;
    const float step = vertical_fov_deg / (height - 1) * kPi / 180.0f;
    for (int r = 0; r < height; ++r) {
      elevation.push_back(top - step * static_cast<float>(r));
    }
  }
  return {width, std::move(elevation), min_range, max_range, min_ray_angle};
}

void SphericalSensorModel::save(const std::string& path) const
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("SphericalSensorModel: cannot write " + path);
  }
  out << "width " << width_ << "\n";
  out << "height " << height() << "\n";
  out << "min_range " << min_range_ << "\n";
  out << "max_range " << max_range_ << "\n";
  out << "min_ray_angle_rad " << min_ray_angle_ << "\n";
  out << "elevation_deg";
  for (float e : elevation_) {
    out << ' ' << e * 180.0f / kPi;
  }
  out << "\n";
}

DepthImage cloud_to_depth_image(const OrganizedCloud& cloud, const SphericalSensorModel& model)
{
  if (cloud.width() != model.width() || cloud.height() != model.height()) {
    throw std::invalid_argument("cloud_to_depth_image: cloud dimensions do not match model");
  }
  DepthImage image(cloud.width(), cloud.height());
  for (int row = 0; row < cloud.height(); ++row) {
    for (int col = 0; col < cloud.width(); ++col) {
      const Eigen::Vector3f& p = cloud.at(row, col);
      if (!p.allFinite()) {
        continue;
      }
      const float d = p.norm();
      if (d < model.min_range()) {
        continue; // dropouts and zero points stay masked
      }
      if (d > model.max_range()) {
        image.set(row, col, model.max_range(), PixelState::kClamped);
      } else {
        image.set(row, col, d, PixelState::kValid);
      }
    }
  }
  return image;
}

int select_integration_scale(float d_r, float min_ray_angle, float voxel_dim, int max_scale)
{
  const float cone = d_r * min_ray_angle;
  int s = 0;
  while (s < max_scale && voxel_dim * static_cast<float>(1 << (s + 1)) <= cone) {
    ++s;
  }
  return s;
}

} // namespace elmap
