// Replay / export / evaluation / benchmark / planning front-end for the
// elastic LiDAR mapping library.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "elmap/errors.hpp"
#include "elmap/io.hpp"
#include "elmap/planner.hpp"
#include "elmap/synth.hpp"

namespace {

struct CommonOptions {
  std::string pipeline = "occupancy";
  elmap::PipelineConfig config;
  double subsample = 0.0;
  std::string metrics_out;
  std::uint64_t seed = 0;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt)
{
  cmd->add_option("--pipeline", opt.pipeline, "Reconstruction pipeline")
      ->check(CLI::IsMember({"tsdf", "occupancy"}));
  cmd->add_option("--voxel-dim", opt.config.voxel_dim, "Voxel side length [m]");
  cmd->add_option("--max-range", opt.config.max_range, "Maximum integration range [m]");
  cmd->add_option("--submap-dim", opt.config.submap_dim, "Submap volume side length [m]");
  cmd->add_option("--max-scale", opt.config.max_scale, "Coarsest integration scale (0-3)")
      ->check(CLI::Range(0, 3));
  cmd->add_option("--subsample", opt.subsample, "Integrate one scan every N meters travelled");
  cmd->add_option("--lambda-odom", opt.config.clustering.lambda_odom,
                  "Odometry-chain span of one submap [m]");
  cmd->add_option("--lambda-cluster", opt.config.clustering.lambda_cluster,
                  "Loop-closure cluster radius [m]");
  cmd->add_option("--update-trans", opt.config.clustering.lambda_update,
                  "Pose-correction translation threshold [m]");
  cmd->add_option("--update-rot", opt.config.clustering.theta_update_deg,
                  "Pose-correction rotation threshold [deg]");
  cmd->add_flag_callback(
      "--no-fusion", [&opt]() { opt.config.fusion_enabled = false; },
      "Disable loop-closure submap fusion");
  cmd->add_option("--metrics-out", opt.metrics_out, "Write per-scan metrics CSV here");
  cmd->add_option("--seed", opt.seed, "Random seed");
}

elmap::PipelineConfig make_config(const CommonOptions& opt)
{
  elmap::PipelineConfig config = opt.config;
  config.pipeline =
      opt.pipeline == "tsdf" ? elmap::PipelineKind::kTsdf : elmap::PipelineKind::kOccupancy;
  return config;
}

Eigen::Vector3f parse_xyz(const std::string& text)
{
  Eigen::Vector3f v;
  char comma1, comma2;
  std::istringstream ss(text);
  if (!(ss >> v.x() >> comma1 >> v.y() >> comma2 >> v.z()) || comma1 != ',' || comma2 != ',') {
    throw std::invalid_argument("expected x,y,z but got '" + text + "'");
  }
  return v;
}

template <typename MapT>
int run_replay(const std::string& bundle, const CommonOptions& opt)
{
  const elmap::RegisteredCloudList list = elmap::load_bundle(bundle);
  const auto result = elmap::replay<MapT>(list, make_config(opt), opt.subsample);
  if (!opt.metrics_out.empty()) {
    elmap::write_metrics_csv(opt.metrics_out, result.metrics);
  }
  std::vector<double> times;
  for (const auto& rec : result.metrics) {
    times.push_back(rec.wall_ms);
  }
  std::sort(times.begin(), times.end());
  std::printf("nodes: %d\n", result.manager.graph().size());
  std::printf("scans integrated: %zu\n", result.metrics.size());
  std::printf("live submaps: %zu\n", result.manager.live_submap_count());
  std::printf("blocks: %zu (%.1f MB)\n", result.manager.total_blocks(),
              result.manager.total_allocated_bytes() / 1048576.0);
  if (!times.empty()) {
    std::printf("integration ms: median %.1f, max %.1f\n", times[times.size() / 2],
                times.back());
  }
  return 0;
}

template <typename MapT>
elmap::SubmapManager<MapT> replay_manager(const std::string& bundle, const CommonOptions& opt)
{
  const elmap::RegisteredCloudList list = elmap::load_bundle(bundle);
  return elmap::replay<MapT>(list, make_config(opt), opt.subsample).manager;
}

int run_export(const std::string& bundle, const CommonOptions& opt, const std::string& format,
               const std::string& out_path, float slice_z)
{
  if (format == "mesh-ply") {
    const auto manager = replay_manager<elmap::TsdfMap>(bundle, opt);
    const elmap::TriangleMesh mesh = elmap::export_global_mesh(manager);
    elmap::save_ply_mesh(out_path, mesh);
    std::printf("mesh: %zu vertices, %zu triangles -> %s\n", mesh.vertices.size(),
                mesh.triangles.size(), out_path.c_str());
  } else if (format == "cloud-ply") {
    std::vector<Eigen::Vector3f> cloud;
    if (opt.pipeline == "tsdf") {
      cloud = elmap::export_global_cloud(replay_manager<elmap::TsdfMap>(bundle, opt));
    } else {
      cloud = elmap::export_global_cloud(replay_manager<elmap::OccupancyMap>(bundle, opt));
    }
    elmap::save_ply_cloud(out_path, cloud);
    std::printf("cloud: %zu points -> %s\n", cloud.size(), out_path.c_str());
  } else { // occupancy-slice-png
    const auto manager = replay_manager<elmap::OccupancyMap>(bundle, opt);
    const elmap::OccupancyMap global = elmap::fuse_all_submaps(manager);
    elmap::save_occupancy_slice_png(out_path, global, slice_z);
    std::printf("occupancy slice at z=%.2f -> %s\n", slice_z, out_path.c_str());
  }
  return 0;
}

int run_eval(const std::string& test_path, const std::string& ref_path,
             std::vector<double> thresholds)
{
  const auto test = elmap::load_ply_cloud(test_path);
  const auto ref = elmap::load_ply_cloud(ref_path);
  const elmap::CloudErrorStats stats = elmap::cloud_to_cloud_error(test, ref, thresholds);
  std::printf("points: %zu test vs %zu reference\n", test.size(), ref.size());
  std::printf("distance error: mean %.4f m, median %.4f m, max %.4f m\n", stats.mean,
              stats.median, stats.max);
  for (std::size_t i = 0; i < stats.thresholds.size(); ++i) {
    std::printf("within %.2f m: %.1f%%\n", stats.thresholds[i],
                100.0 * stats.fraction_within[i]);
  }
  return 0;
}

template <typename MapT>
void bench_pipeline(const elmap::RegisteredCloudList& list, const CommonOptions& opt)
{
  const auto result = elmap::replay<MapT>(list, make_config(opt), 0.0);
  std::vector<double> times;
  for (const auto& rec : result.metrics) {
    times.push_back(rec.wall_ms);
  }
  std::sort(times.begin(), times.end());
  std::printf("[%s] scans %zu, median %.1f ms, p90 %.1f ms, max %.1f ms, blocks %zu, %.1f MB\n",
              elmap::to_string(result.manager.config().pipeline).c_str(), times.size(),
              times[times.size() / 2], times[times.size() * 9 / 10], times.back(),
              result.manager.total_blocks(),
              result.manager.total_allocated_bytes() / 1048576.0);
  if (!opt.metrics_out.empty()) {
    elmap::write_metrics_csv(opt.metrics_out, result.metrics);
  }
}

int run_bench(const CommonOptions& opt, int scans, double spacing, double corridor_length)
{
  using namespace elmap;
  Scene scene;
  scene.add_room({-5.0f, -2.0f, 0.0f}, {static_cast<float>(corridor_length), 2.0f, 3.0f});
  const SphericalSensorModel model =
      SphericalSensorModel::os1_64(0.5f, make_config(opt).max_range);

  RegisteredCloudList list;
  list.model = model;
  for (int i = 0; i < scans; ++i) {
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    pose.translation() = Eigen::Vector3d(i * spacing, 0.0, 1.5);
    list.graph.nodes.push_back(pose);
    list.clouds.push_back(synth_scan(scene, model, pose, 0.0f, opt.seed + i));
  }
  if (opt.pipeline == "tsdf") {
    bench_pipeline<TsdfMap>(list, opt);
  } else {
    bench_pipeline<OccupancyMap>(list, opt);
  }
  return 0;
}

int run_synth(const std::string& out_dir, const std::string& scene_name, int nodes,
              double spacing, double drift_per_100m, bool closures, std::uint64_t seed)
{
  using namespace elmap;
  Scene scene;
  std::vector<Eigen::Vector3d> positions;
  std::vector<std::pair<int, int>> loop_edges;
  if (scene_name == "room") {
    scene = Scene::box_room({-5.0f, -5.0f, 0.0f}, {5.0f, 5.0f, 3.0f});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.5, 3.5);
    for (int i = 0; i < nodes; ++i) {
      positions.emplace_back(u(rng), u(rng), 1.4);
    }
  } else if (scene_name == "corridor") {
    const double length = nodes * spacing + 10.0;
    scene.add_room({-5.0f, -2.0f, 0.0f}, {static_cast<float>(length), 2.0f, 3.0f});
    for (int i = 0; i < nodes; ++i) {
      positions.emplace_back(spacing * i, 0.0, 1.5);
    }
  } else { // loop
    scene.add_room({-22.0f, -22.0f, 0.0f}, {22.0f, 22.0f, 4.0f});
    scene.add_obstacle({-14.0f, -14.0f, 0.0f}, {14.0f, 14.0f, 4.0f});
    const double half = 18.0;
    const int per_lap = static_cast<int>(8.0 * half / spacing);
    for (int i = 0; i < nodes; ++i) {
      const double s = spacing * (i % per_lap);
      const double side = 2.0 * half;
      if (s < side) {
        positions.emplace_back(-half + s, -half, 1.7);
      } else if (s < 2.0 * side) {
        positions.emplace_back(half, -half + (s - side), 1.7);
      } else if (s < 3.0 * side) {
        positions.emplace_back(half - (s - 2.0 * side), half, 1.7);
      } else {
        positions.emplace_back(-half, half - (s - 3.0 * side), 1.7);
      }
      if (closures && i >= per_lap) {
        loop_edges.emplace_back(i - per_lap, i);
      }
    }
  }

  RegisteredCloudList list;
  list.model = SphericalSensorModel::os1_64(0.5f, 60.0f);
  const Eigen::Vector3d drift_dir = Eigen::Vector3d(0.57, 0.33, 0.75).normalized();
  double arc = 0.0;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (k > 0) {
      arc += (positions[k] - positions[k - 1]).norm();
    }
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    pose.translation() = positions[k];
    list.clouds.push_back(synth_scan(scene, list.model, pose, 0.0f, seed + k));
    pose.translation() += drift_dir * (drift_per_100m / 100.0 * arc);
    list.graph.nodes.push_back(pose);
    if (k > 0) {
      list.graph.edges.push_back({EdgeType::kOdometry, static_cast<int>(k) - 1,
                                  static_cast<int>(k)});
    }
  }
  for (const auto& [from, to] : loop_edges) {
    list.graph.edges.push_back({EdgeType::kLoopClosure, from, to});
  }
  save_bundle(out_dir, list);
  std::printf("bundle: %zu nodes, %zu edges -> %s\n", list.graph.nodes.size(),
              list.graph.edges.size(), out_dir.c_str());
  return 0;
}

int run_plan(const std::string& bundle, const CommonOptions& opt, const std::string& start_text,
             const std::string& goal_text, float radius, int iters, const std::string& out_path,
             bool allow_unknown)
{
  const auto manager = replay_manager<elmap::OccupancyMap>(bundle, opt);
  std::vector<const elmap::OccupancyMap*> maps;
  // Planning needs map-frame queries; fuse into one identity-rooted map.
  const elmap::OccupancyMap global = elmap::fuse_all_submaps(manager);
  maps.push_back(&global);

  elmap::PlannerConfig config;
  config.robot_radius = radius;
  config.max_iterations = iters;
  config.unknown_space = allow_unknown ? elmap::UnknownSpacePolicy::kAllowed
                                       : elmap::UnknownSpacePolicy::kForbidden;
  const elmap::PlanResult result =
      elmap::plan(parse_xyz(start_text), parse_xyz(goal_text), maps, config, opt.seed);
  if (!result.success) {
    std::printf("planning failed after %d iterations\n", result.iterations);
    return 2;
  }
  std::printf("path: %zu waypoints, %.2f m\n", result.path.waypoints.size(),
              result.path.length);
  for (const auto& w : result.path.waypoints) {
    std::printf("  %.3f %.3f %.3f\n", w.x(), w.y(), w.z());
  }
  if (!out_path.empty()) {
    elmap::save_ply_polyline(out_path, result.path.waypoints);
  }
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Elastic multi-resolution LiDAR reconstruction"};
  app.require_subcommand(1);

  CommonOptions opt;

  std::string bundle;
  auto* replay_cmd = app.add_subcommand("replay", "Stream a registered cloud list into submaps");
  replay_cmd->add_option("bundle", bundle, "Bundle directory")->required();
  add_common_flags(replay_cmd, opt);

  std::string format = "mesh-ply";
  std::string out_path = "out.ply";
  float slice_z = 0.0f;
  auto* export_cmd = app.add_subcommand("export", "Replay and export the fused global map");
  export_cmd->add_option("bundle", bundle, "Bundle directory")->required();
  export_cmd->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"mesh-ply", "cloud-ply", "occupancy-slice-png"}));
  export_cmd->add_option("--out", out_path, "Output file")->required();
  export_cmd->add_option("--slice-z", slice_z, "Height of the occupancy cross-section [m]");
  add_common_flags(export_cmd, opt);

  std::string test_path, ref_path;
  std::vector<double> thresholds{0.1, 0.25, 0.5, 1.0};
  auto* eval_cmd = app.add_subcommand("eval", "Point-to-point error between two clouds");
  eval_cmd->add_option("--test", test_path, "Cloud under test (PLY)")->required();
  eval_cmd->add_option("--ref", ref_path, "Reference cloud (PLY)")->required();
  eval_cmd->add_option("--thresholds", thresholds, "Error thresholds [m]");

  int bench_scans = 50;
  double bench_spacing = 2.0;
  double bench_length = 110.0;
  auto* bench_cmd = app.add_subcommand("bench", "Synthetic corridor integration benchmark");
  bench_cmd->add_option("--scans", bench_scans, "Number of scans");
  bench_cmd->add_option("--spacing", bench_spacing, "Scan spacing [m]");
  bench_cmd->add_option("--corridor-length", bench_length, "Corridor length [m]");
  add_common_flags(bench_cmd, opt);

  std::string synth_dir;
  std::string synth_scene = "room";
  int synth_nodes = 20;
  double synth_spacing = 2.0;
  double synth_drift = 0.0;
  bool synth_closures = false;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic registered-cloud-list bundle");
  synth_cmd->add_option("out", synth_dir, "Output bundle directory")->required();
  synth_cmd->add_option("--scene", synth_scene, "Scene kind")
      ->check(CLI::IsMember({"room", "corridor", "loop"}));
  synth_cmd->add_option("--nodes", synth_nodes, "Number of graph nodes");
  synth_cmd->add_option("--spacing", synth_spacing, "Node spacing [m]");
  synth_cmd->add_option("--drift", synth_drift, "Injected drift [m per 100 m travelled]");
  synth_cmd->add_flag("--loop-closures", synth_closures, "Emit loop-closure edges on revisits");
  synth_cmd->add_option("--seed", opt.seed, "Random seed");

  std::string start_text, goal_text;
  float radius = 0.3f;
  int iters = 10000;
  bool allow_unknown = false;
  std::string plan_out;
  auto* plan_cmd = app.add_subcommand("plan", "RRT* path over the occupancy reconstruction");
  plan_cmd->add_option("bundle", bundle, "Bundle directory")->required();
  plan_cmd->add_option("--start", start_text, "Start x,y,z [m]")->required();
  plan_cmd->add_option("--goal", goal_text, "Goal x,y,z [m]")->required();
  plan_cmd->add_option("--radius", radius, "Robot radius [m]");
  plan_cmd->add_option("--iters", iters, "RRT* iterations");
  plan_cmd->add_flag("--allow-unknown", allow_unknown, "Treat unknown space as traversable");
  plan_cmd->add_option("--out", plan_out, "Waypoint polyline PLY");
  add_common_flags(plan_cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1; // bad flags are input errors
  }

  try {
    if (replay_cmd->parsed()) {
      return opt.pipeline == "tsdf" ? run_replay<elmap::TsdfMap>(bundle, opt)
                                    : run_replay<elmap::OccupancyMap>(bundle, opt);
    }
    if (export_cmd->parsed()) {
      return run_export(bundle, opt, format, out_path, slice_z);
    }
    if (eval_cmd->parsed()) {
      return run_eval(test_path, ref_path, thresholds);
    }
    if (bench_cmd->parsed()) {
      return run_bench(opt, bench_scans, bench_spacing, bench_length);
    }
    if (synth_cmd->parsed()) {
      return run_synth(synth_dir, synth_scene, synth_nodes, synth_spacing, synth_drift,
                       synth_closures, opt.seed);
    }
    if (plan_cmd->parsed()) {
      return run_plan(bundle, opt, start_text, goal_text, radius, iters, plan_out,
                      allow_unknown);
    }
  } catch (const elmap::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
