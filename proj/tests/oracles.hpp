#pragma once

// Test-side brute-force integrators: dense arrays updated with the projective
// measurement rules written out directly, independent of the octree descent
// they are checked against.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "elmap/config.hpp"
#include "elmap/sensor_model.hpp"

namespace elmap::test {

struct DenseGrid {
  int size = 64;
  float voxel_dim = 0.1f;
  Eigen::Vector3f origin = Eigen::Vector3f::Zero();

  std::size_t index(int x, int y, int z) const
  {
    return (static_cast<std::size_t>(z) * size + y) * size + x;
  }
  Eigen::Vector3f centre(int x, int y, int z) const
  {
    return origin + voxel_dim * (Eigen::Vector3f(x, y, z) + Eigen::Vector3f::Constant(0.5f));
  }
};

// Nearest-pixel projection written out longhand (linear row search). The
// angle expressions match the production model bit for bit; the assignment
// logic is what this reimplements independently.
inline bool oracle_project(const SphericalSensorModel& model, const Eigen::Vector3f& p, int& row,
                           int& col, float& range)
{
  range = p.norm();
  if (range < 1e-6f) {
    return false;
  }
  const float elevation = std::atan2(p.z(), p.head<2>().norm());
  if (elevation > model.elevation_max() || elevation < model.elevation_min()) {
    return false;
  }
  row = 0;
  float best = std::abs(elevation - model.elevation(0));
  for (int r = 1; r < model.height(); ++r) {
    const float d = std::abs(elevation - model.elevation(r));
    if (d < best) {
      best = d;
      row = r;
    }
  }
  const float azimuth = std::atan2(p.y(), p.x());
  const float pi = 3.14159265358979f;
  const float step = 2.0f * pi / model.width();
  long c = std::lround((pi - azimuth) / step - 0.5f);
  c %= model.width();
  if (c < 0) {
    c += model.width();
  }
  col = static_cast<int>(c);
  return true;
}

struct DenseOccupancyOracle {
  DenseGrid grid;
  OccupancyParams params;
  std::vector<float> log_odds;
  std::vector<std::uint8_t> observed;

  DenseOccupancyOracle(const DenseGrid& g, const OccupancyParams& p)
      : grid(g), params(p), log_odds(static_cast<std::size_t>(g.size) * g.size * g.size, 0.0f),
        observed(log_odds.size(), 0)
  {
  }

  void integrate(const DepthImage& depth, const SphericalSensorModel& model,
                 const Eigen::Isometry3f& T_map_from_sensor)
  {
    const Eigen::Isometry3f T_LS = T_map_from_sensor.inverse();
    const float sigma = params.surface_thickness_factor * grid.voxel_dim; // scale 0
    for (int z = 0; z < grid.size; ++z) {
      for (int y = 0; y < grid.size; ++y) {
        for (int x = 0; x < grid.size; ++x) {
          const Eigen::Vector3f p = T_LS * grid.centre(x, y, z);
          int row, col;
          float d_v;
          if (!oracle_project(model, p, row, col, d_v)) {
            continue;
          }
          const PixelState state = depth.state(row, col);
          if (state == PixelState::kInvalid) {
            continue;
          }
          const float d_r = depth.depth(row, col);
          float delta;
          if (state == PixelState::kClamped) {
            if (d_v > d_r - sigma * std::abs(params.log_odds_min) / params.log_odds_max) {
              continue;
            }
            delta = params.log_odds_min;
          } else {
            if (d_v > d_r + 3.0f * sigma) {
              continue;
            }
            delta = std::min(std::max(params.log_odds_max * (d_v - d_r) / sigma,
                                      params.log_odds_min),
                             params.log_odds_max);
          }
          const std::size_t i = grid.index(x, y, z);
          log_odds[i] = std::min(std::max(log_odds[i] + delta, params.clamp_min),
                                 params.clamp_max);
          observed[i] = 1;
        }
      }
    }
  }
};

struct DenseTsdfOracle {
  DenseGrid grid;
  TsdfParams params;
  std::vector<float> value;
  std::vector<float> weight;

  DenseTsdfOracle(const DenseGrid& g, const TsdfParams& p)
      : grid(g), params(p), value(static_cast<std::size_t>(g.size) * g.size * g.size, 0.0f),
        weight(value.size(), 0.0f)
  {
  }

  void integrate(const DepthImage& depth, const SphericalSensorModel& model,
                 const Eigen::Isometry3f& T_map_from_sensor)
  {
    const Eigen::Isometry3f T_LS = T_map_from_sensor.inverse();
    const float tau = params.truncation_factor * grid.voxel_dim; // scale 0
    for (int z = 0; z < grid.size; ++z) {
      for (int y = 0; y < grid.size; ++y) {
        for (int x = 0; x < grid.size; ++x) {
          const Eigen::Vector3f p = T_LS * grid.centre(x, y, z);
          int row, col;
          float d_v;
          if (!oracle_project(model, p, row, col, d_v)) {
            continue;
          }
          if (depth.state(row, col) != PixelState::kValid) {
            continue;
          }
          const float sdf = depth.depth(row, col) - d_v;
          if (std::abs(sdf) > tau) {
            continue;
          }
          const float sample = std::min(std::max(sdf / tau, -1.0f), 1.0f);
          const std::size_t i = grid.index(x, y, z);
          value[i] = (value[i] * weight[i] + sample) / (weight[i] + 1.0f);
          weight[i] = std::min(weight[i] + 1.0f, params.max_weight);
        }
      }
    }
  }
};

} // namespace elmap::test
