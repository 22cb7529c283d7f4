#include "elmap/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusion_impl.hpp"
#include "integrator_impl.hpp"

namespace elmap {

namespace {

float sigma_at(int scale, const OccupancyParams& params, float voxel_dim)
{
  return params.surface_thickness_factor * voxel_dim * static_cast<float>(1 << scale);
}

struct OccupancyPolicy {
  using Voxel = OccupancyVoxel;
  static constexpr bool kTracksFreeSpace = true;

  OccupancyParams params;
  float voxel_dim;
  float min_ray_angle;
  int max_scale;

  float behind_margin() const { return 3.0f * sigma_at(max_scale, params, voxel_dim); }

  // Outside this margin in front of the surface the ramp has saturated to
  // log_odds_min, so a whole-cube update equals the per-cell one.
  float front_margin() const
  {
    return sigma_at(max_scale, params, voxel_dim) * std::abs(params.log_odds_min) /
           params.log_odds_max;
  }

  int select_scale(float d_ref) const
  {
    return select_integration_scale(d_ref, min_ray_angle, voxel_dim, max_scale);
  }

  bool update_cell(OccupancyVoxel& v, float d_v, float d_r, PixelState state, int scale) const
  {
    const std::optional<float> delta =
        state == PixelState::kClamped
            ? log_odds_measurement_free_only(d_v, d_r, scale, params, voxel_dim)
            : log_odds_measurement(d_v, d_r, scale, params, voxel_dim);
    if (!delta) {
      return false;
    }
    v.log_odds = std::clamp(v.log_odds + *delta, params.clamp_min, params.clamp_max);
    v.observed = true;
    v.weight = static_cast<std::uint16_t>(std::min<int>(v.weight + 1, 0xffff));
    return true;
  }

  void apply_free(OccupancyVoxel& v) const
  {
    v.log_odds = std::clamp(v.log_odds + params.log_odds_min, params.clamp_min, params.clamp_max);
    v.observed = true;
    v.weight = static_cast<std::uint16_t>(std::min<int>(v.weight + 1, 0xffff));
  }

  void refresh_block(OccupancyBlock& block) const { refresh_occupancy_block(block); }

  void after_integration(OccupancyTree& tree) const { up_propagate(tree); }
};

BlockStats stats_of_slot_data(const OccupancyVoxel& v)
{
  BlockStats s;
  s.max_value = v.observed ? v.log_odds : 0.0f;
  s.any_observed = v.observed;
  s.all_observed = v.observed;
  return s;
}

BlockStats combine_stats(const BlockStats& a, const BlockStats& b)
{
  BlockStats s;
  s.max_value = std::max(a.max_value, b.max_value);
  s.any_observed = a.any_observed || b.any_observed;
  s.all_observed = a.all_observed && b.all_observed;
  return s;
}

BlockStats propagate_node(OctreeNode<OccupancyVoxel>* node)
{
  BlockStats acc;
  for (int i = 0; i < 8; ++i) {
    BlockStats child;
    if (node->child_node[i] != nullptr) {
      child = propagate_node(node->child_node[i]);
    } else if (node->child_block[i] != nullptr) {
      child = node->child_block[i]->stats();
    } else {
      child = stats_of_slot_data(node->child_data[i]);
    }
    acc = i == 0 ? child : combine_stats(acc, child);
  }
  node->stats = acc;
  return acc;
}

} // namespace

std::optional<float> log_odds_measurement(float d_v, float d_r, int scale,
                                          const OccupancyParams& params, float voxel_dim)
{
  const float sigma = sigma_at(scale, params, voxel_dim);
  if (d_v > d_r + 3.0f * sigma) {
    return std::nullopt; // space behind the surface stays unobserved
  }
  return std::clamp(params.log_odds_max * (d_v - d_r) / sigma, params.log_odds_min,
                    params.log_odds_max);
}

std::optional<float> log_odds_measurement_free_only(float d_v, float d_r, int scale,
                                                    const OccupancyParams& params,
                                                    float voxel_dim)
{
  const float sigma = sigma_at(scale, params, voxel_dim);
  if (d_v > d_r - sigma * std::abs(params.log_odds_min) / params.log_odds_max) {
    return std::nullopt; // only the saturated free plateau applies
  }
  return params.log_odds_min;
}

void refresh_occupancy_block(OccupancyBlock& block)
{
  const int base_scale = block.current_scale();
  for (int s = base_scale; s < OccupancyBlock::kMaxScale; ++s) {
    const int n_coarse = OccupancyBlock::cells_per_side(s + 1);
    for (int z = 0; z < n_coarse; ++z) {
      for (int y = 0; y < n_coarse; ++y) {
        for (int x = 0; x < n_coarse; ++x) {
          OccupancyVoxel agg;
          float max_v = -std::numeric_limits<float>::infinity();
          bool any = false, all = true;
          std::uint16_t weight = 0;
          for (int k = 0; k < 8; ++k) {
            const OccupancyVoxel& c =
                block.at(s, 2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + ((k >> 2) & 1));
            max_v = std::max(max_v, c.observed ? c.log_odds : 0.0f);
            any |= c.observed;
            all &= c.observed;
            weight = std::max(weight, c.weight);
          }
          agg.log_odds = any ? max_v : 0.0f;
          agg.observed = any;
          agg.weight = weight;
          block.at(s + 1, x, y, z) = agg;
        }
      }
    }
  }
  BlockStats stats;
  stats.all_observed = true;
  float max_v = -std::numeric_limits<float>::infinity();
  const int n = OccupancyBlock::cells_per_side(base_scale);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const OccupancyVoxel& c = block.at(base_scale, x, y, z);
        max_v = std::max(max_v, c.observed ? c.log_odds : 0.0f);
        stats.any_observed |= c.observed;
        stats.all_observed &= c.observed;
      }
    }
  }
  stats.max_value = stats.any_observed ? max_v : 0.0f;
  stats.all_observed &= stats.any_observed;
  block.stats() = stats;
}

void up_propagate(OccupancyTree& tree)
{
  propagate_node(tree.root());
}

OccupancyVoxel fuse_occupancy_cells(const OccupancyVoxel& target, const OccupancyVoxel& source,
                                    const OccupancyParams& params)
{
  if (!target.observed) {
    return source;
  }
  OccupancyVoxel out;
  out.log_odds = std::clamp(target.log_odds + source.log_odds, params.clamp_min, params.clamp_max);
  out.observed = true;
  out.weight = static_cast<std::uint16_t>(std::min<int>(target.weight + source.weight, 0xffff));
  return out;
}

OccupancyMap::OccupancyMap(const PipelineConfig& config, const SphericalSensorModel& model,
                           const Eigen::Vector3f& origin)
    : config_(config), model_(model),
      tree_(OctreeConfig{config.submap_dim, config.voxel_dim, origin})
{
}

IntegrationStats OccupancyMap::integrate(const DepthImage& depth,
                                         const Eigen::Isometry3f& T_map_from_sensor, int frame)
{
  OccupancyPolicy policy{config_.occupancy, config_.voxel_dim, model_.min_ray_angle(),
                         config_.max_scale};
  detail::ProjectiveIntegrator<OccupancyPolicy> integrator(policy, model_);
  return integrator.integrate(tree_, depth, T_map_from_sensor, frame);
}

OccupancyQueryResult OccupancyMap::query(const Eigen::Vector3f& point, int min_scale) const
{
  const OctreeQueryResult<OccupancyVoxel> r = tree_.query(point, min_scale);
  OccupancyQueryResult out;
  out.scale = r.scale;
  out.log_odds = r.data.log_odds;
  out.state = classify_occupancy(r.data);
  return out;
}

namespace {

// Conservative ball classification against one subtree.
struct BallQuery {
  const OccupancyTree* tree;
  Eigen::Vector3f centre;
  float radius;
  bool saw_occupied = false;
  bool saw_unknown = false;

  bool overlaps(const Eigen::Vector3i& base, int side) const
  {
    const Eigen::Vector3f lo = tree->origin() + tree->voxel_dim() * base.cast<float>();
    const Eigen::Vector3f hi = lo + Eigen::Vector3f::Constant(tree->voxel_dim() * side);
    const Eigen::Vector3f closest = centre.cwiseMax(lo).cwiseMin(hi);
    return (closest - centre).squaredNorm() <= radius * radius;
  }

  void visit_cell(const OccupancyVoxel& v)
  {
    switch (classify_occupancy(v)) {
      case Occupancy::kOccupied:
        saw_occupied = true;
        break;
      case Occupancy::kUnknown:
        saw_unknown = true;
        break;
      case Occupancy::kFree:
        break;
    }
  }

  void visit_block(const OccupancyBlock& block)
  {
    const int s = block.current_scale();
    const int n = OccupancyBlock::cells_per_side(s);
    const int stride = 1 << s;
    for (int z = 0; z < n && !saw_occupied; ++z) {
      for (int y = 0; y < n && !saw_occupied; ++y) {
        for (int x = 0; x < n && !saw_occupied; ++x) {
          const Eigen::Vector3i cell_base =
              block.base_coord() + stride * Eigen::Vector3i(x, y, z);
          if (overlaps(cell_base, stride)) {
            visit_cell(block.at(s, x, y, z));
          }
        }
      }
    }
  }

  void visit(const OctreeNode<OccupancyVoxel>* node, const Eigen::Vector3i& base, int depth)
  {
    const int child_side = tree->voxels_per_side() >> (depth + 1);
    for (int slot = 0; slot < 8 && !saw_occupied; ++slot) {
      const Eigen::Vector3i child_base =
          base + child_side * Eigen::Vector3i(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1);
      if (!overlaps(child_base, child_side)) {
        continue;
      }
      if (node->child_node[slot] != nullptr) {
        const BlockStats& s = node->child_node[slot]->stats;
        if (s.all_observed && s.max_value < 0.0f) {
          continue; // whole subtree observed free
        }
        visit(node->child_node[slot], child_base, depth + 1);
      } else if (node->child_block[slot] != nullptr) {
        const BlockStats& s = node->child_block[slot]->stats();
        if (s.all_observed && s.max_value < 0.0f) {
          continue;
        }
        visit_block(*node->child_block[slot]);
      } else {
        visit_cell(node->child_data[slot]);
      }
    }
  }
};

} // namespace

Occupancy OccupancyMap::classify_ball(const Eigen::Vector3f& centre, float radius) const
{
  BallQuery q{&tree_, centre, radius};
  // Parts of the ball outside the volume are unknown.
  const Eigen::Vector3f lo = tree_.origin();
  const Eigen::Vector3f hi = tree_.origin() + Eigen::Vector3f::Constant(tree_.map_dim());
  for (int axis = 0; axis < 3; ++axis) {
    if (centre[axis] - radius < lo[axis] || centre[axis] + radius > hi[axis]) {
      q.saw_unknown = true;
    }
  }
  q.visit(tree_.root(), Eigen::Vector3i::Zero(), 0);
  if (q.saw_occupied) {
    return Occupancy::kOccupied;
  }
  return q.saw_unknown ? Occupancy::kUnknown : Occupancy::kFree;
}

void OccupancyMap::fuse_from(const OccupancyMap& source, const Eigen::Isometry3f& T_this_from_source)
{
  const OccupancyParams params = config_.occupancy;
  detail::TreeFuser fuser(
      tree_, T_this_from_source,
      [params](const OccupancyVoxel& t, const OccupancyVoxel& s) {
        return fuse_occupancy_cells(t, s, params);
      },
      [](OccupancyBlock& b) { refresh_occupancy_block(b); },
      [](const OccupancyVoxel& v) { return v.log_odds < 0.0f; });
  fuser.run(source.tree_);
  up_propagate(tree_);
}

} // namespace elmap
