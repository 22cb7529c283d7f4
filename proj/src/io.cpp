#include "elmap/io.hpp"

#include "elmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <png.h>

namespace elmap {

namespace fs = std::filesystem;

// ---- PLY -------------------------------------------------------------------

namespace {

void write_ply_header(std::ostream& out, bool binary, std::size_t vertices,
                      std::size_t faces = 0, std::size_t edges = 0,
                      const std::vector<std::string>& obj_info = {})
{
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  for (const std::string& line : obj_info) {
    out << "obj_info " << line << "\n";
  }
  out << "element vertex " << vertices << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (faces > 0) {
    out << "element face " << faces << "\n";
    out << "property list uchar int vertex_indices\n";
  }
  if (edges > 0) {
    out << "element edge " << edges << "\n";
    out << "property int vertex1\nproperty int vertex2\n";
  }
  out << "end_header\n";
}

void write_vertices(std::ostream& out, bool binary, const std::vector<Eigen::Vector3f>& points)
{
  if (binary) {
    for (const Eigen::Vector3f& p : points) {
      out.write(reinterpret_cast<const char*>(p.data()), 3 * sizeof(float));
    }
  } else {
    for (const Eigen::Vector3f& p : points) {
      out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    }
  }
}

struct PlyHeader {
  bool binary = false;
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  int vertex_property_count = 0;
  int organized_width = 0;
  int organized_height = 0;
};

PlyHeader parse_ply_header(std::istream& in, const std::string& path)
{
  PlyHeader header;
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw InputError(path + ": not a PLY file");
  }
  std::string element;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian") {
        header.binary = true;
      } else if (fmt != "ascii") {
        throw InputError(path + ": unsupported PLY format " + fmt);
      }
    } else if (key == "obj_info") {
      std::string name;
      ss >> name;
      if (name == "organized_width") {
        ss >> header.organized_width;
      } else if (name == "organized_height") {
        ss >> header.organized_height;
      }
    } else if (key == "element") {
      std::size_t count;
      ss >> element >> count;
      if (element == "vertex") {
        header.vertex_count = count;
      } else if (element == "face") {
        header.face_count = count;
      }
    } else if (key == "property") {
      if (element == "vertex") {
        std::string type;
        ss >> type;
        if (type != "float") {
          throw InputError(path + ": only float vertex properties supported");
        }
        ++header.vertex_property_count;
      }
    } else if (key == "end_header") {
      break;
    }
  }
  if (header.vertex_property_count < 3) {
    throw InputError(path + ": vertex element must carry x y z");
  }
  return header;
}

std::vector<Eigen::Vector3f> read_vertices(std::istream& in, const PlyHeader& header,
                                           const std::string& path)
{
  std::vector<Eigen::Vector3f> points(header.vertex_count);
  const int extra = header.vertex_property_count - 3;
  if (header.binary) {
    for (auto& p : points) {
      in.read(reinterpret_cast<char*>(p.data()), 3 * sizeof(float));
      in.ignore(extra * static_cast<int>(sizeof(float)));
    }
  } else {
    for (auto& p : points) {
      in >> p.x() >> p.y() >> p.z();
      for (int e = 0; e < extra; ++e) {
        float skip;
        in >> skip;
      }
    }
  }
  if (!in) {
    throw InputError(path + ": truncated vertex data");
  }
  return points;
}

} // namespace

void save_ply_cloud(const std::string& path, const std::vector<Eigen::Vector3f>& points,
                    bool binary)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_ply_cloud: cannot write " + path);
  }
  write_ply_header(out, binary, points.size());
  write_vertices(out, binary, points);
}

std::vector<Eigen::Vector3f> load_ply_cloud(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("load_ply_cloud: cannot open " + path);
  }
  const PlyHeader header = parse_ply_header(in, path);
  return read_vertices(in, header, path);
}

void save_ply_mesh(const std::string& path, const TriangleMesh& mesh, bool binary)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_ply_mesh: cannot write " + path);
  }
  write_ply_header(out, binary, mesh.vertices.size(), mesh.triangles.size());
  write_vertices(out, binary, mesh.vertices);
  if (binary) {
    for (const Eigen::Vector3i& t : mesh.triangles) {
      const unsigned char n = 3;
      out.write(reinterpret_cast<const char*>(&n), 1);
      out.write(reinterpret_cast<const char*>(t.data()), 3 * sizeof(int));
    }
  } else {
    for (const Eigen::Vector3i& t : mesh.triangles) {
      out << "3 " << t.x() << ' ' << t.y() << ' ' << t.z() << '\n';
    }
  }
}

void save_ply_organized(const std::string& path, const OrganizedCloud& cloud, bool binary)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_ply_organized: cannot write " + path);
  }
  write_ply_header(out, binary, cloud.size(), 0, 0,
                   {"organized_width " + std::to_string(cloud.width()),
                    "organized_height " + std::to_string(cloud.height())});
  write_vertices(out, binary, cloud.points());
}

OrganizedCloud load_ply_organized(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("load_ply_organized: cannot open " + path);
  }
  const PlyHeader header = parse_ply_header(in, path);
  if (header.organized_width <= 0 || header.organized_height <= 0) {
    throw InputError(path + ": missing organized_width/organized_height");
  }
  if (static_cast<std::size_t>(header.organized_width) * header.organized_height !=
      header.vertex_count) {
    throw InputError(path + ": vertex count does not match organized dimensions");
  }
  OrganizedCloud cloud(header.organized_width, header.organized_height);
  cloud.points() = read_vertices(in, header, path);
  return cloud;
}

void save_ply_polyline(const std::string& path, const std::vector<Eigen::Vector3f>& waypoints)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_ply_polyline: cannot write " + path);
  }
  const std::size_t edges = waypoints.empty() ? 0 : waypoints.size() - 1;
  write_ply_header(out, false, waypoints.size(), 0, edges);
  write_vertices(out, false, waypoints);
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    out << i << ' ' << i + 1 << '\n';
  }
}

// ---- Bundle ------------------------------------------------------------------

namespace {

Eigen::Isometry3d pose_from_record(const std::array<double, 7>& v, const std::string& where)
{
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]); // w, x, y, z
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw InputError(where + ": quaternion not normalized");
  }
  q.normalize();
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = q.toRotationMatrix();
  T.translation() = Eigen::Vector3d(v[0], v[1], v[2]);
  return T;
}

void write_pose_record(std::ostream& out, const Eigen::Isometry3d& T)
{
  const Eigen::Quaterniond q(T.linear());
  const Eigen::Vector3d& t = T.translation();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", t.x(), t.y(),
                t.z(), q.x(), q.y(), q.z(), q.w());
  out << buf;
}

std::string cloud_file_name(int index)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cloud_%06d.ply", index);
  return buf;
}

} // namespace

RegisteredCloudList load_bundle(const std::string& dir)
{
  const fs::path root(dir);
  RegisteredCloudList list;
  list.model = SphericalSensorModel::load((root / "sensor.txt").string());

  std::ifstream in(root / "graph.txt");
  if (!in) {
    throw InputError("load_bundle: cannot open " + (root / "graph.txt").string());
  }
  std::string line;
  int line_no = 0;
  std::vector<std::pair<int, Eigen::Isometry3d>> nodes;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    const std::string where = "graph.txt:" + std::to_string(line_no);
    if (tag == "NODE") {
      int index;
      std::array<double, 7> v{};
      ss >> index;
      for (double& x : v) {
        ss >> x;
      }
      if (!ss) {
        throw InputError(where + ": malformed NODE record");
      }
      nodes.emplace_back(index, pose_from_record(v, where));
    } else if (tag == "EDGE") {
      std::string type;
      int from, to;
      ss >> type >> from >> to;
      if (!ss || (type != "ODOM" && type != "LOOP")) {
        throw InputError(where + ": malformed EDGE record");
      }
      list.graph.edges.push_back(
          {type == "ODOM" ? EdgeType::kOdometry : EdgeType::kLoopClosure, from, to});
    } else if (tag == "EXTRINSIC") {
      std::array<double, 7> v{};
      for (double& x : v) {
        ss >> x;
      }
      if (!ss) {
        throw InputError(where + ": malformed EXTRINSIC record");
      }
      list.graph.T_base_from_lidar = pose_from_record(v, where);
    } else {
      throw InputError(where + ": unknown record '" + tag + "'");
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].first != static_cast<int>(i)) {
      throw InputError("load_bundle: node indices must be 0..Q without gaps");
    }
    list.graph.nodes.push_back(nodes[i].second);
  }
  list.graph.validate();

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const fs::path cloud_path = root / cloud_file_name(static_cast<int>(i));
    OrganizedCloud cloud = load_ply_organized(cloud_path.string());
    if (cloud.width() != list.model.width() || cloud.height() != list.model.height()) {
      throw InputError(cloud_path.string() + ": dimensions do not match sensor config");
    }
    list.clouds.push_back(std::move(cloud));
  }
  return list;
}

void save_bundle(const std::string& dir, const RegisteredCloudList& list, bool binary)
{
  const fs::path root(dir);
  fs::create_directories(root);
  list.model.save((root / "sensor.txt").string());

  std::ofstream out(root / "graph.txt");
  if (!out) {
    throw std::runtime_error("save_bundle: cannot write graph.txt");
  }
  out << "EXTRINSIC ";
  write_pose_record(out, list.graph.T_base_from_lidar);
  out << "\n";
  for (int k = 0; k < list.graph.size(); ++k) {
    out << "NODE " << k << ' ';
    write_pose_record(out, list.graph.nodes[k]);
    out << "\n";
  }
  for (const PoseGraphEdge& e : list.graph.edges) {
    out << "EDGE " << (e.type == EdgeType::kOdometry ? "ODOM" : "LOOP") << ' ' << e.from << ' '
        << e.to << "\n";
  }
  for (std::size_t i = 0; i < list.clouds.size(); ++i) {
    save_ply_organized((root / cloud_file_name(static_cast<int>(i))).string(), list.clouds[i],
                       binary);
  }
}

// ---- Metrics -------------------------------------------------------------------

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_metrics_csv: cannot write " + path);
  }
  out << kMetricsCsvHeader << "\n";
  for (const MetricsRecord& r : records) {
    out << r.scan_index << ',' << r.node_index << ',' << r.wall_ms << ',' << r.rss_mb << ','
        << r.block_bytes << ',' << r.blocks << ',' << r.submaps << ',' << r.cells_updated[0]
        << ',' << r.cells_updated[1] << ',' << r.cells_updated[2] << ',' << r.cells_updated[3]
        << "\n";
  }
}

// ---- Point-to-point error ---------------------------------------------------

namespace {

// Minimal exact k-d tree over a point set.
class KdTree {
 public:
  explicit KdTree(const std::vector<Eigen::Vector3f>& points) : points_(points)
  {
    indices_.resize(points.size());
    std::iota(indices_.begin(), indices_.end(), 0u);
    nodes_.reserve(2 * points.size());
    root_ = build(0, points.size());
  }

  float nearest_distance(const Eigen::Vector3f& query) const
  {
    float best = std::numeric_limits<float>::infinity();
    search(root_, query, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    int left = -1;
    int right = -1;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    int axis = 0;
    float split = 0.0f;
  };
  static constexpr std::size_t kLeafSize = 16;

  int build(std::size_t begin, std::size_t end)
  {
    Node node;
    node.begin = static_cast<std::uint32_t>(begin);
    node.end = static_cast<std::uint32_t>(end);
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      return id;
    }
    Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity());
    Eigen::Vector3f hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = (begin + end) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid, indices_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = points_[indices_[mid]][axis];
    nodes_[id].left = build(begin, mid);
    nodes_[id].right = build(mid, end);
    return id;
  }

  void search(int id, const Eigen::Vector3f& q, float& best_sq) const
  {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        best_sq = std::min(best_sq, (points_[indices_[i]] - q).squaredNorm());
      }
      return;
    }
    const float delta = q[node.axis] - node.split;
    const int near = delta < 0.0f ? node.left : node.right;
    const int far = delta < 0.0f ? node.right : node.left;
    search(near, q, best_sq);
    if (delta * delta < best_sq) {
      search(far, q, best_sq);
    }
  }

  const std::vector<Eigen::Vector3f>& points_;
  std::vector<std::uint32_t> indices_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

} // namespace

CloudErrorStats cloud_to_cloud_error(const std::vector<Eigen::Vector3f>& test,
                                     const std::vector<Eigen::Vector3f>& reference,
                                     std::vector<double> thresholds)
{
  if (test.empty() || reference.empty()) {
    throw std::invalid_argument("cloud_to_cloud_error: empty input cloud");
  }
  const KdTree tree(reference);
  std::vector<float> distances(test.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(test.size()); ++i) {
    distances[i] = tree.nearest_distance(test[i]);
  }

  CloudErrorStats stats;
  stats.thresholds = std::move(thresholds);
  std::sort(stats.thresholds.begin(), stats.thresholds.end());
  stats.fraction_within.resize(stats.thresholds.size(), 0.0);

  std::vector<float> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  stats.max = sorted.back();
  stats.median = sorted[sorted.size() / 2];
  stats.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
  for (std::size_t t = 0; t < stats.thresholds.size(); ++t) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(),
                                     static_cast<float>(stats.thresholds[t]));
    stats.fraction_within[t] = static_cast<double>(it - sorted.begin()) / sorted.size();
  }
  const int bins = std::max(1, static_cast<int>(std::ceil(stats.max / stats.bin_width)));
  stats.histogram.assign(bins, 0);
  for (float d : distances) {
    const int bin = std::min(bins - 1, static_cast<int>(d / stats.bin_width));
    ++stats.histogram[bin];
  }
  return stats;
}

// ---- Global export -----------------------------------------------------------

TriangleMesh export_global_mesh(const SubmapManager<TsdfMap>& manager)
{
  return fuse_all_submaps(manager).extract_mesh();
}

std::vector<Eigen::Vector3f> export_global_cloud(const SubmapManager<TsdfMap>& manager)
{
  return export_global_mesh(manager).vertices;
}

std::vector<Eigen::Vector3f> occupied_cell_centres(const OccupancyMap& map)
{
  std::vector<Eigen::Vector3f> out;
  const OccupancyTree& tree = map.tree();
  tree.iterate_blocks([&](const OccupancyBlock& block) {
    const int s = block.current_scale();
    const int n = OccupancyBlock::cells_per_side(s);
    const int stride = 1 << s;
    for (int z = 0; z < n; ++z) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const OccupancyVoxel& v = block.at(s, x, y, z);
          if (v.observed && v.log_odds > 0.0f) {
            out.push_back(
                tree.cell_centre(block.base_coord() + stride * Eigen::Vector3i(x, y, z), s));
          }
        }
      }
    }
  });
  return out;
}

std::vector<Eigen::Vector3f> export_global_cloud(const SubmapManager<OccupancyMap>& manager)
{
  return occupied_cell_centres(fuse_all_submaps(manager));
}

void save_occupancy_slice_png(const std::string& path, const OccupancyMap& map, float z)
{
  const OccupancyTree& tree = map.tree();
  // Bounding box of allocated blocks in x/y to keep the image tight.
  Eigen::Vector2f lo = Eigen::Vector2f::Constant(std::numeric_limits<float>::infinity());
  Eigen::Vector2f hi = -lo;
  tree.iterate_blocks([&](const OccupancyBlock& block) {
    const Eigen::Vector3f base =
        tree.origin() + tree.voxel_dim() * block.base_coord().cast<float>();
    lo = lo.cwiseMin(base.head<2>());
    hi = hi.cwiseMax(base.head<2>() + Eigen::Vector2f::Constant(8.0f * tree.voxel_dim()));
  });
  if (!(lo.x() <= hi.x())) {
    throw std::runtime_error("save_occupancy_slice_png: empty map");
  }
  const int max_pixels = 4096;
  float step = tree.voxel_dim();
  int width = static_cast<int>((hi.x() - lo.x()) / step) + 1;
  int height = static_cast<int>((hi.y() - lo.y()) / step) + 1;
  while (width > max_pixels || height > max_pixels) {
    step *= 2.0f;
    width = static_cast<int>((hi.x() - lo.x()) / step) + 1;
    height = static_cast<int>((hi.y() - lo.y()) / step) + 1;
  }

  std::vector<unsigned char> image(static_cast<std::size_t>(width) * height, 128);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const Eigen::Vector3f p(lo.x() + (col + 0.5f) * step, lo.y() + (row + 0.5f) * step, z);
      if (!tree.contains(p)) {
        continue;
      }
      switch (map.query(p, 0).state) {
        case Occupancy::kOccupied:
          image[static_cast<std::size_t>(row) * width + col] = 0;
          break;
        case Occupancy::kFree:
          image[static_cast<std::size_t>(row) * width + col] = 255;
          break;
        case Occupancy::kUnknown:
          break;
      }
    }
  }

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) {
    throw std::runtime_error("save_occupancy_slice_png: cannot write " + path);
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    std::fclose(fp);
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_occupancy_slice_png: libpng failure");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int row = height - 1; row >= 0; --row) { // north up
    png_write_row(png, image.data() + static_cast<std::size_t>(row) * width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

} // namespace elmap
