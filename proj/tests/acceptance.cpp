// End-to-end acceptance runs: oracle equivalence for both pipelines,
// scale-selection table, reconstruction accuracy, elasticity under drift,
// submap growth, integration performance, memory behavior and a compact
// re-run of each module's core randomized invariants. One PASS line per
// criterion.

#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>

#include <doctest.h>

#include "elmap/io.hpp"
#include "elmap/morton.hpp"
#include "elmap/planner.hpp"
#include "elmap/submap.hpp"
#include "elmap/synth.hpp"
#include "oracles.hpp"

using namespace elmap;

namespace {

Eigen::Isometry3d pose_at(const Eigen::Vector3d& t, double yaw = 0.0)
{
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.translation() = t;
  T.linear() = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return T;
}

SphericalSensorModel reduced_model(float max_range)
{
  std::vector<float> elevation(32);
  const float top = 16.6f * 3.14159265f / 180.0f;
  const float step = 2.0f * top / 31.0f;
  for (int r = 0; r < 32; ++r) {
    elevation[r] = top - step * r;
  }
  return {512, elevation, 0.4f, max_range};
}

// 64^3-voxel fixture shared by the two oracle criteria. The max range sits
// inside the room diagonal so some rays clamp into free-space-only updates.
struct OracleFixture {
  PipelineConfig config;
  SphericalSensorModel model = SphericalSensorModel::os1_64(0.5f, 4.5f);
  Scene scene;
  Eigen::Vector3f origin = Eigen::Vector3f::Constant(-3.2f);
  std::vector<Eigen::Isometry3d> poses;

  OracleFixture()
  {
    config.voxel_dim = 0.1f;
    config.submap_dim = 6.4f;
    config.max_range = 4.5f;
    config.max_scale = 0; // scale forced to 0
    scene = Scene::box_room({-2.9f, -2.9f, -1.1f}, {2.9f, 2.9f, 1.3f});
    scene.add_cylinder({1.1f, 0.5f}, 0.35f, -1.1f, 1.3f);
    scene.add_obstacle({-2.0f, 0.9f, -1.1f}, {-1.3f, 1.6f, 0.4f});
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> xy(-1.3, 1.3);
    std::uniform_real_distribution<double> yaw(-3.1, 3.1);
    for (int i = 0; i < 20; ++i) {
      poses.push_back(pose_at({xy(rng), xy(rng), -0.2 + 0.03 * i}, yaw(rng)));
    }
  }
};

std::vector<Eigen::Vector3d> square_loop(double half_side, double spacing, int laps, double z)
{
  // Axis-aligned square loop centred on the origin, one node every `spacing`
  // meters of arc, repeated `laps` times.
  const double perimeter = 8.0 * half_side;
  const int per_lap = static_cast<int>(perimeter / spacing);
  std::vector<Eigen::Vector3d> out;
  for (int lap = 0; lap < laps; ++lap) {
    for (int i = 0; i < per_lap; ++i) {
      const double s = spacing * i;
      const double side = 2.0 * half_side;
      Eigen::Vector3d p;
      if (s < side) {
        p = {-half_side + s, -half_side, z};
      } else if (s < 2.0 * side) {
        p = {half_side, -half_side + (s - side), z};
      } else if (s < 3.0 * side) {
        p = {half_side - (s - 2.0 * side), half_side, z};
      } else {
        p = {-half_side, half_side - (s - 3.0 * side), z};
      }
      out.push_back(p);
    }
  }
  return out;
}

double median_of(std::vector<double> values)
{
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

} // namespace

TEST_CASE("criterion 1: occupancy octree matches the dense brute-force integrator")
{
  const auto t0 = std::chrono::steady_clock::now();
  OracleFixture fx;
  OccupancyMap map(fx.config, fx.model, fx.origin);
  test::DenseGrid grid{64, fx.config.voxel_dim, fx.origin};
  test::DenseOccupancyOracle oracle(grid, fx.config.occupancy);
  for (const auto& pose : fx.poses) {
    const DepthImage depth = cloud_to_depth_image(synth_scan(fx.scene, fx.model, pose), fx.model);
    map.integrate(depth, pose.cast<float>());
    oracle.integrate(depth, fx.model, pose.cast<float>());
  }
  long cells = 0;
  for (int z = 0; z < 64; ++z) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const auto r = map.tree().query_voxel({x, y, z}, 0);
        const std::size_t i = grid.index(x, y, z);
        REQUIRE(std::abs(r.data.log_odds - oracle.log_odds[i]) <= 1e-6f);
        REQUIRE(r.data.observed == (oracle.observed[i] != 0));
        ++cells;
      }
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(seconds < 30.0);
  std::printf("[criterion 1] PASS occupancy oracle equivalence: %ld cells, 20 scans, %.1f s\n",
              cells, seconds);
}

TEST_CASE("criterion 2: TSDF octree matches the dense brute-force integrator")
{
  const auto t0 = std::chrono::steady_clock::now();
  OracleFixture fx;
  fx.config.pipeline = PipelineKind::kTsdf;
  TsdfMap map(fx.config, fx.model, fx.origin);
  test::DenseGrid grid{64, fx.config.voxel_dim, fx.origin};
  test::DenseTsdfOracle oracle(grid, fx.config.tsdf);
  for (const auto& pose : fx.poses) {
    const DepthImage depth = cloud_to_depth_image(synth_scan(fx.scene, fx.model, pose), fx.model);
    map.integrate(depth, pose.cast<float>());
    oracle.integrate(depth, fx.model, pose.cast<float>());
  }
  for (int z = 0; z < 64; ++z) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const auto r = map.tree().query_voxel({x, y, z}, 0);
        const std::size_t i = grid.index(x, y, z);
        REQUIRE(std::abs(r.data.value - oracle.value[i]) <= 1e-6f);
        REQUIRE(std::abs(r.data.weight - oracle.weight[i]) <= 1e-6f);
      }
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(seconds < 30.0);
  std::printf("[criterion 2] PASS tsdf oracle equivalence: values and weights, 20 scans, %.1f s\n",
              seconds);
}

TEST_CASE("criterion 3: integration scale table at the OS1-64 operating point")
{
  const float voxel = 0.065f;
  const float theta = 9.198e-3f;
  REQUIRE(select_integration_scale(5.0f, theta, voxel) == 0);
  REQUIRE(select_integration_scale(15.0f, theta, voxel) == 1);
  REQUIRE(select_integration_scale(30.0f, theta, voxel) == 2);
  REQUIRE(select_integration_scale(60.0f, theta, voxel) == 3);
  std::printf("[criterion 3] PASS scale table 5/15/30/60 m -> 0/1/2/3\n");
}

TEST_CASE("criterion 4: box-room mesh accuracy at 6.5 cm")
{
  PipelineConfig config;
  config.pipeline = PipelineKind::kTsdf;
  config.voxel_dim = 0.065f;
  config.submap_dim = 16.0f;
  config.max_range = 60.0f;
  const auto model = SphericalSensorModel::os1_64(0.5f, 60.0f);
  const Scene scene = Scene::box_room({-5.0f, -5.0f, 0.0f}, {5.0f, 5.0f, 3.0f});

  TsdfMap map(config, model, Eigen::Vector3f(-8.32f, -8.32f, -6.82f));
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  int poses = 0;
  for (int gx = 0; gx < 5; ++gx) {
    for (int gy = 0; gy < 4; ++gy) {
      const Eigen::Isometry3d pose =
          pose_at({-3.6 + 1.8 * gx + jitter(rng), -3.3 + 2.2 * gy + jitter(rng),
                   1.3 + 0.02 * (gx + gy)},
                  0.37 * (gx + 5 * gy));
      map.integrate(cloud_to_depth_image(synth_scan(scene, model, pose), model),
                    pose.cast<float>());
      ++poses;
    }
  }
  REQUIRE(poses == 20);
  const TriangleMesh mesh = map.extract_mesh();
  REQUIRE(mesh.vertices.size() > 10000);
  std::size_t near_surface = 0;
  for (const auto& v : mesh.vertices) {
    if (scene.distance_to_surface(v) <= 0.5f * config.voxel_dim) {
      ++near_surface;
    }
  }
  const double fraction = static_cast<double>(near_surface) / mesh.vertices.size();
  REQUIRE(fraction >= 0.95);
  std::printf("[criterion 4] PASS mesh accuracy: %.1f%% of %zu vertices within half a voxel\n",
              100.0 * fraction, mesh.vertices.size());
}

TEST_CASE("criterion 5: elasticity halves the error after pose correction")
{
  PipelineConfig config;
  config.pipeline = PipelineKind::kTsdf;
  config.voxel_dim = 0.1f;
  config.submap_dim = 92.0f;
  config.max_range = 25.0f;
  config.clustering.lambda_odom = 15.0;
  const auto model = reduced_model(25.0f);

  Scene scene;
  scene.add_room({-22.0f, -22.0f, 0.0f}, {22.0f, 22.0f, 4.0f});
  scene.add_obstacle({-14.0f, -14.0f, 0.0f}, {14.0f, 14.0f, 4.0f});

  // Square loop of 144 m on the corridor centreline; 1 m drift per 100 m.
  const auto true_positions = square_loop(18.0, 2.0, 1, 1.7);
  // Drift with a vertical component: no scene plane can absorb it entirely.
  const Eigen::Vector3d drift_dir = Eigen::Vector3d(0.57, 0.33, 0.75).normalized();
  PoseGraph true_graph;
  SubmapManager<TsdfMap> manager(config, model);
  std::mt19937_64 rng(4242);
  double arc = 0.0;
  for (std::size_t k = 0; k < true_positions.size(); ++k) {
    if (k > 0) {
      arc += (true_positions[k] - true_positions[k - 1]).norm();
    }
    const Eigen::Isometry3d true_pose = pose_at(true_positions[k], 0.05 * k);
    true_graph.nodes.push_back(true_pose);
    Eigen::Isometry3d drifted = true_pose;
    drifted.translation() += drift_dir * (0.01 * arc);
    const OrganizedCloud cloud = synth_scan(scene, model, true_pose);
    manager.add_node(drifted, &cloud);
  }
  REQUIRE(manager.live_submap_count() >= 4);
  // Dense ground-truth sampling of the analytic scene surfaces.
  const std::vector<Eigen::Vector3f> reference = scene.sample_surface(800000, rng);

  const auto uncorrected = export_global_cloud(manager);
  const double median_before = cloud_to_cloud_error(uncorrected, reference).median;

  const int corrected = manager.apply_pose_updates(true_graph);
  // Only roots whose drift exceeded the 0.1 m / 2.5 deg thresholds moved;
  // the first submap's root has no drift.
  REQUIRE(corrected == static_cast<int>(manager.live_submap_count()) - 1);
  for (const PoseCorrection& c : manager.corrections()) {
    REQUIRE((c.after.translation() - c.before.translation()).norm() > 0.1);
  }

  // The simulated loop closure: first and last nodes are co-located.
  manager.add_edge({EdgeType::kLoopClosure, 0, manager.graph().size() - 1});
  const auto corrected_cloud = export_global_cloud(manager);
  const double median_after = cloud_to_cloud_error(corrected_cloud, reference).median;

  REQUIRE(median_after <= 0.5 * median_before);
  std::printf(
      "[criterion 5] PASS elasticity: median error %.3f m -> %.3f m (%.0f%% reduction), "
      "%d of %zu submaps corrected\n",
      median_before, median_after, 100.0 * (1.0 - median_after / median_before), corrected,
      manager.live_submap_count());
}

TEST_CASE("criterion 6: submap count grows with space, not time")
{
  PipelineConfig config;
  config.voxel_dim = 0.12f;
  config.submap_dim = 60.0f;
  config.max_range = 20.0f;
  config.clustering.lambda_odom = 12.0;
  config.clustering.lambda_cluster = 5.0;
  const auto model = reduced_model(20.0f);

  Scene scene;
  scene.add_room({-19.0f, -19.0f, 0.0f}, {19.0f, 19.0f, 4.0f});
  scene.add_obstacle({-11.0f, -11.0f, 0.0f}, {11.0f, 11.0f, 4.0f});

  const int per_lap = static_cast<int>(8.0 * 15.0 / 2.0); // 60 nodes per 120 m lap
  auto run = [&](bool fusion, int laps) {
    PipelineConfig c = config;
    c.fusion_enabled = fusion;
    SubmapManager<OccupancyMap> manager(c, model);
    const auto positions = square_loop(15.0, 2.0, laps, 1.6);
    for (std::size_t k = 0; k < positions.size(); ++k) {
      const Eigen::Isometry3d pose = pose_at(positions[k]);
      const OrganizedCloud cloud = synth_scan(scene, model, pose);
      manager.add_node(pose, &cloud);
      if (k >= static_cast<std::size_t>(per_lap)) {
        manager.add_edge({EdgeType::kLoopClosure, static_cast<int>(k - per_lap),
                          static_cast<int>(k)});
      }
    }
    return manager;
  };

  const auto lap1 = run(true, 1);
  const auto fused = run(true, 5);
  const auto unfused = run(false, 5);
  const std::size_t lap1_count = lap1.live_submap_count();
  const std::size_t fused_count = fused.live_submap_count();
  const std::size_t unfused_count = unfused.live_submap_count();

  REQUIRE(fused_count <= lap1_count + 1);
  REQUIRE(unfused_count >= 4 * fused_count);
  std::printf(
      "[criterion 6] PASS growth with space: lap1 %zu submaps, lap5 fused %zu, "
      "lap5 --no-fusion %zu\n",
      lap1_count, fused_count, unfused_count);
}

TEST_CASE("criterion 7+8: integration speed and memory behavior on a corridor")
{
  PipelineConfig config;
  config.voxel_dim = 0.065f;
  config.submap_dim = 180.0f;
  config.max_range = 60.0f;
  const auto model = SphericalSensorModel::os1_64(0.5f, 60.0f);

  Scene scene;
  scene.add_room({-5.0f, -2.0f, 0.0f}, {112.0f, 2.0f, 3.0f});

  // Out and back along the corridor: 55 scans forward, 55 on the return with
  // loop closures against the co-located forward nodes.
  std::vector<Eigen::Isometry3d> poses;
  for (int i = 0; i < 55; ++i) {
    poses.push_back(pose_at({1.3 + 2.0 * i, 0.0, 1.5}));
  }
  for (int i = 0; i < 55; ++i) {
    poses.push_back(pose_at({1.3 + 2.0 * (54 - i), 0.0, 1.5}));
  }
  std::vector<OrganizedCloud> clouds;
  clouds.reserve(poses.size());
  for (const auto& pose : poses) {
    clouds.push_back(synth_scan(scene, model, pose));
  }

  // Criterion 7a: one scan into a fresh map, both pipelines.
  {
    PipelineConfig tsdf_config = config;
    tsdf_config.pipeline = PipelineKind::kTsdf;
    SubmapManager<TsdfMap> fresh_tsdf(tsdf_config, model);
    const double tsdf_ms = fresh_tsdf.add_node(poses[0], &clouds[0]).wall_ms;
    SubmapManager<OccupancyMap> fresh_occ(config, model);
    const double occ_ms = fresh_occ.add_node(poses[0], &clouds[0]).wall_ms;
    REQUIRE(tsdf_ms <= 2000.0);
    REQUIRE(occ_ms <= 2000.0);
    std::printf("[criterion 7] fresh-map scan: tsdf %.0f ms, occupancy %.0f ms (gate 2000 ms)\n",
                tsdf_ms, occ_ms);
  }

  auto corridor_run = [&](bool fusion) {
    PipelineConfig c = config;
    c.fusion_enabled = fusion;
    SubmapManager<OccupancyMap> manager(c, model);
    std::vector<double> times;
    std::vector<std::size_t> bytes;
    for (std::size_t k = 0; k < poses.size(); ++k) {
      times.push_back(manager.add_node(poses[k], &clouds[k]).wall_ms);
      if (k >= 55) {
        manager.add_edge({EdgeType::kLoopClosure, static_cast<int>(109 - k),
                          static_cast<int>(k)});
      }
      bytes.push_back(manager.total_allocated_bytes());
    }
    return std::make_pair(times, bytes);
  };

  const auto [times_fused, bytes_fused] = corridor_run(true);
  const auto [times_unfused, bytes_unfused] = corridor_run(false);

  // Criterion 7b: median over the 50 first consecutive corridor scans.
  const double median_ms =
      median_of({times_fused.begin(), times_fused.begin() + 50});
  REQUIRE(median_ms <= 1000.0);
  std::printf("[criterion 7] PASS corridor median %.0f ms over 50 scans (gate 1000 ms)\n",
              median_ms);

  // Criterion 8: sub-quadratic growth with scan count on the forward pass,
  // and a plateau (or drop) on the fused revisit versus untamed growth
  // without fusion.
  const double growth = static_cast<double>(bytes_fused[49]) / bytes_fused[24];
  REQUIRE(growth < 4.0);
  const double revisit_ratio =
      static_cast<double>(bytes_fused.back()) / bytes_fused[54];
  REQUIRE(revisit_ratio <= 1.15);
  REQUIRE(bytes_unfused.back() > bytes_fused.back());
  std::printf(
      "[criterion 8] PASS memory: 25->50 scan growth x%.2f (sub-quadratic), revisit "
      "x%.2f with fusion, %.0f MB fused vs %.0f MB without\n",
      growth, revisit_ratio, bytes_fused.back() / 1048576.0, bytes_unfused.back() / 1048576.0);
}

TEST_CASE("criterion 9: module invariants under randomized property tests")
{
  std::mt19937_64 rng(31337);

  // Morton round-trip and Z-order.
  {
    std::uniform_int_distribution<std::uint32_t> coord(0, kMaxMortonCoord);
    MortonCode prev = 0;
    for (int i = 0; i < 2000; ++i) {
      const Eigen::Vector3i p(coord(rng), coord(rng), coord(rng));
      REQUIRE(morton_decode(morton_encode(p)) == p);
      prev = std::max(prev, morton_encode(p));
    }
    REQUIRE(prev > 0);
  }

  // Occupancy clamp bounds under random update sequences.
  {
    OccupancyParams params;
    std::uniform_real_distribution<float> d(0.1f, 40.0f);
    std::uniform_int_distribution<int> scale(0, 3);
    OccupancyVoxel v;
    for (int i = 0; i < 20000; ++i) {
      if (const auto delta = log_odds_measurement(d(rng), d(rng), scale(rng), params, 0.065f)) {
        v.log_odds = std::clamp(v.log_odds + *delta, params.clamp_min, params.clamp_max);
      }
      REQUIRE(v.log_odds >= params.clamp_min);
      REQUIRE(v.log_odds <= params.clamp_max);
    }
  }

  // TSDF fuse commutativity and caps.
  {
    std::uniform_real_distribution<float> value(-1.0f, 1.0f);
    std::uniform_real_distribution<float> weight(0.0f, 120.0f);
    for (int i = 0; i < 2000; ++i) {
      const TsdfVoxel a{value(rng), weight(rng)};
      const TsdfVoxel b{value(rng), weight(rng)};
      const TsdfVoxel ab = fuse_tsdf_cells(a, b, 100.0f);
      const TsdfVoxel ba = fuse_tsdf_cells(b, a, 100.0f);
      REQUIRE(std::abs(ab.value - ba.value) < 1e-5f);
      REQUIRE(ab.weight <= 100.0f);
      REQUIRE(std::abs(ab.value) <= 1.0f + 1e-6f);
    }
  }

  // Graph distance (triangle inequality against the direct edge) and the
  // relative-pose composition against the raw matrix product.
  {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    PoseGraph graph;
    for (int i = 0; i < 10; ++i) {
      graph.nodes.push_back(pose_at({u(rng), u(rng), 0.0}));
      if (i > 0) {
        graph.edges.push_back({EdgeType::kOdometry, i - 1, i});
      }
    }
    for (int i = 0; i + 1 < 10; ++i) {
      const double direct =
          (graph.lidar_position(i) - graph.lidar_position(i + 1)).norm();
      REQUIRE(graph_distance(graph, i, i + 1) == doctest::Approx(direct));
    }
    for (int i = 0; i < 50; ++i) {
      const Eigen::Isometry3d a = pose_at({u(rng), u(rng), u(rng)}, u(rng));
      const Eigen::Isometry3d b = pose_at({u(rng), u(rng), u(rng)}, u(rng));
      const Eigen::Isometry3d c = pose_at({u(rng), u(rng), u(rng)}, u(rng));
      REQUIRE((relative_lidar_pose(a, b, c).matrix() -
               a.matrix().inverse() * b.matrix() * c.matrix())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
  }

  // Pose-update gating: triggers iff translation or rotation exceeds its bound.
  {
    std::uniform_real_distribution<double> t(0.0, 0.3);
    std::uniform_real_distribution<double> r(0.0, 6.0);
    for (int i = 0; i < 500; ++i) {
      const double dt = t(rng);
      const double dr = r(rng);
      Eigen::Isometry3d base = pose_at({1.0, 2.0, 3.0}, 0.5);
      Eigen::Isometry3d moved = base;
      moved.translation() += dt * Eigen::Vector3d::UnitX();
      moved.linear() =
          base.linear() *
          Eigen::AngleAxisd(dr * EIGEN_PI / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
      REQUIRE(pose_update_check(moved, base, 0.1, 2.5) == (dt > 0.1 || dr > 2.5));
    }
  }

  // Serialization round-trips: poses to 1e-12, cloud payload bit-exact.
  {
    RegisteredCloudList list;
    list.model = reduced_model(20.0f);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<float> range(1.0f, 15.0f);
    for (int k = 0; k < 3; ++k) {
      list.graph.nodes.push_back(pose_at({u(rng), u(rng), u(rng)}, u(rng)));
      if (k > 0) {
        list.graph.edges.push_back({EdgeType::kOdometry, k - 1, k});
      }
      OrganizedCloud cloud(list.model.width(), list.model.height());
      for (auto& p : cloud.points()) {
        p = Eigen::Vector3f(range(rng), range(rng), range(rng));
      }
      list.clouds.push_back(std::move(cloud));
    }
    const std::string dir = "/tmp/elmap_acceptance_bundle";
    save_bundle(dir, list);
    const RegisteredCloudList loaded = load_bundle(dir);
    for (int k = 0; k < 3; ++k) {
      REQUIRE((loaded.graph.nodes[k].matrix() - list.graph.nodes[k].matrix())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
      REQUIRE(loaded.clouds[k].points() == list.clouds[k].points());
    }
  }

  // RRT* path validity on a free box with a pillar.
  {
    PipelineConfig config;
    config.voxel_dim = 0.1f;
    config.submap_dim = 26.0f;
    OccupancyMap map(config, reduced_model(20.0f), Eigen::Vector3f::Constant(-12.8f));
    for (int bz = 0; bz < 5; ++bz) {
      for (int by = 0; by < 14; ++by) {
        for (int bx = 0; bx < 14; ++bx) {
          auto* block =
              map.tree().allocate_block(Eigen::Vector3i(128 + 8 * bx, 128 + 8 * by, 128 + 8 * bz), 0);
          for (int i = 0; i < 512; ++i) {
            auto& cell = block->at(0, i % 8, (i / 8) % 8, i / 64);
            cell.observed = true;
            cell.log_odds = -2.0f;
          }
          refresh_occupancy_block(*block);
        }
      }
    }
    up_propagate(map.tree());
    const Eigen::Vector3f lo = map.tree().cell_centre({128, 128, 128}, 0);
    PlannerConfig planner;
    planner.max_iterations = 3000;
    planner.step_size = 0.8f;
    const Eigen::Vector3f start = lo + Eigen::Vector3f(1.0f, 1.0f, 1.0f);
    const Eigen::Vector3f goal = lo + Eigen::Vector3f(8.0f, 8.0f, 1.0f);
    const PlanResult result = plan(start, goal, {&map}, planner, 11);
    REQUIRE(result.success);
    for (std::size_t i = 1; i < result.best_cost_history.size(); ++i) {
      REQUIRE(result.best_cost_history[i] <= result.best_cost_history[i - 1] + 1e-9);
    }
    for (const auto& w : result.path.waypoints) {
      REQUIRE(is_free(w, planner.robot_radius, {&map}, planner.unknown_space));
    }
  }

  std::printf("[criterion 9] PASS module invariants (fixed-seed randomized suites)\n");
}
