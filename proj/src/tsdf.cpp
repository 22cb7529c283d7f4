#include "elmap/tsdf.hpp"

#include <algorithm>
#include <cmath>

#include "fusion_impl.hpp"
#include "integrator_impl.hpp"

namespace elmap {

namespace {

float tau_at(int scale, const TsdfParams& params, float voxel_dim)
{
  return params.truncation_factor * voxel_dim * static_cast<float>(1 << scale);
}

struct TsdfPolicy {
  using Voxel = TsdfVoxel;
  static constexpr bool kTracksFreeSpace = false;

  TsdfParams params;
  float voxel_dim;
  float min_ray_angle;
  int max_scale;

  float behind_margin() const { return tau_at(max_scale, params, voxel_dim); }
  float front_margin() const { return tau_at(max_scale, params, voxel_dim); }

  int select_scale(float d_ref) const
  {
    return select_integration_scale(d_ref, min_ray_angle, voxel_dim, max_scale);
  }

  bool update_cell(TsdfVoxel& v, float d_v, float d_r, PixelState state, int scale) const
  {
    if (state == PixelState::kClamped) {
      return false; // beyond-max-range rays are masked for TSDF
    }
    const float tau = tau_at(scale, params, voxel_dim);
    const float sdf = d_r - d_v;
    if (std::abs(sdf) > tau) {
      return false; // cells update exactly inside the +-tau band
    }
    const float sample = std::clamp(sdf / tau, -1.0f, 1.0f);
    v.value = (v.value * v.weight + sample) / (v.weight + 1.0f);
    v.weight = std::min(v.weight + 1.0f, params.max_weight);
    return true;
  }

  void apply_free(TsdfVoxel&) const {} // unreachable, free tracking is off

  void refresh_block(TsdfBlock& block) const { refresh_tsdf_block(block); }

  void after_integration(TsdfTree&) const {}
};

} // namespace

TsdfVoxel fuse_tsdf_cells(const TsdfVoxel& target, const TsdfVoxel& source, float max_weight)
{
  if (target.weight <= 0.0f) {
    return source;
  }
  if (source.weight <= 0.0f) {
    return target;
  }
  TsdfVoxel out;
  const float w = target.weight + source.weight;
  out.value = (target.value * target.weight + source.value * source.weight) / w;
  out.weight = std::min(w, max_weight);
  return out;
}

void refresh_tsdf_block(TsdfBlock& block)
{
  for (int s = block.current_scale(); s < TsdfBlock::kMaxScale; ++s) {
    const int n_coarse = TsdfBlock::cells_per_side(s + 1);
    for (int z = 0; z < n_coarse; ++z) {
      for (int y = 0; y < n_coarse; ++y) {
        for (int x = 0; x < n_coarse; ++x) {
          float value_sum = 0.0f;
          float weight_sum = 0.0f;
          int observed = 0;
          for (int k = 0; k < 8; ++k) {
            const TsdfVoxel& c =
                block.at(s, 2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + ((k >> 2) & 1));
            if (c.weight > 0.0f) {
              value_sum += c.value * c.weight;
              weight_sum += c.weight;
              ++observed;
            }
          }
          TsdfVoxel agg;
          if (observed > 0) {
            agg.value = value_sum / weight_sum;
            agg.weight = weight_sum / static_cast<float>(observed);
          }
          block.at(s + 1, x, y, z) = agg;
        }
      }
    }
  }
}

TsdfMap::TsdfMap(const PipelineConfig& config, const SphericalSensorModel& model,
                 const Eigen::Vector3f& origin)
    : config_(config), model_(model),
      tree_(OctreeConfig{config.submap_dim, config.voxel_dim, origin})
{
}

IntegrationStats TsdfMap::integrate(const DepthImage& depth,
                                    const Eigen::Isometry3f& T_map_from_sensor, int frame)
{
  TsdfPolicy policy{config_.tsdf, config_.voxel_dim, model_.min_ray_angle(), config_.max_scale};
  detail::ProjectiveIntegrator<TsdfPolicy> integrator(policy, model_);
  return integrator.integrate(tree_, depth, T_map_from_sensor, frame);
}

void TsdfMap::fuse_from(const TsdfMap& source, const Eigen::Isometry3f& T_this_from_source)
{
  const float max_weight = config_.tsdf.max_weight;
  detail::TreeFuser fuser(
      tree_, T_this_from_source,
      [max_weight](const TsdfVoxel& t, const TsdfVoxel& s) {
        return fuse_tsdf_cells(t, s, max_weight);
      },
      [](TsdfBlock& b) { refresh_tsdf_block(b); }, [](const TsdfVoxel&) { return false; });
  fuser.run(source.tree_);
}

} // namespace elmap
