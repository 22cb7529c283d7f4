#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace elmap {

struct TriangleMesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<Eigen::Vector3i> triangles;

  bool empty() const { return vertices.empty(); }

  void append(const TriangleMesh& other)
  {
    const int base = static_cast<int>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    triangles.reserve(triangles.size() + other.triangles.size());
    for (const Eigen::Vector3i& t : other.triangles) {
      triangles.push_back(t + Eigen::Vector3i::Constant(base));
    }
  }

  void transform(const Eigen::Isometry3f& T)
  {
    for (Eigen::Vector3f& v : vertices) {
      v = T * v;
    }
  }
};

} // namespace elmap
