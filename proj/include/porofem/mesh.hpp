#ifndef POROFEM_MESH_HPP
#define POROFEM_MESH_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

#include "porofem/common.hpp"

namespace porofem {

/// Boundary parts of an axis-aligned rectangle.
/// Gamma1: x = xmin, Gamma2: x = xmax, Gamma3: y = ymax, Gamma4: y = ymin.
enum class BoundaryTag : int { Gamma1 = 1, Gamma2 = 2, Gamma3 = 3, Gamma4 = 4 };

inline const char* to_string(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::Gamma1: return "Gamma1";
    case BoundaryTag::Gamma2: return "Gamma2";
    case BoundaryTag::Gamma3: return "Gamma3";
    case BoundaryTag::Gamma4: return "Gamma4";
  }
  return "?";
}

/// Jacobian data of the affine map from the reference triangle
/// {(0,0),(1,0),(0,1)} onto a physical triangle.
struct AffineMapData {
  Mat2 jacobian;
  double det = 0.0;   // = 2 * triangle area
  Mat2 inv_transpose;
};

/// Conforming triangulation of an axis-aligned rectangle.
///
/// Triangles are counterclockwise. Edges are deduplicated; triangle_edges[t][k]
/// is the edge opposite local vertex k. Boundary edges carry exactly one tag.
struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;
  std::vector<std::array<int, 3>> triangle_edges;
  std::map<int, BoundaryTag> boundary_edges;
  double h = 0.0;  // max element diameter

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  Vec2 edge_midpoint(int e) const {
    const auto& ed = edges[e];
    return (vertices[ed[0]] + vertices[ed[1]]) * 0.5;
  }

  double triangle_area(int t) const {
    const auto& tri = triangles[t];
    Vec2 a = vertices[tri[0]], b = vertices[tri[1]], c = vertices[tri[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
  }
};

inline AffineMapData affine_map(const TriMesh& mesh, int t) {
  const auto& tri = mesh.triangles.at(static_cast<std::size_t>(t));
  Vec2 p0 = mesh.vertices[tri[0]], p1 = mesh.vertices[tri[1]], p2 = mesh.vertices[tri[2]];
  AffineMapData m;
  m.jacobian = {p1.x - p0.x, p2.x - p0.x,
                p1.y - p0.y, p2.y - p0.y};
  m.det = m.jacobian.det();
  if (!(m.det > 0.0))
    throw std::runtime_error("affine_map: degenerate or inverted triangle " + std::to_string(t));
  const double inv = 1.0 / m.det;
  // inverse-transpose of [[a,b],[c,d]] is (1/det) [[d,-c],[-b,a]]
  m.inv_transpose = {m.jacobian.a11 * inv, -m.jacobian.a10 * inv,
                     -m.jacobian.a01 * inv, m.jacobian.a00 * inv};
  return m;
}

/// Structured triangulation of (x0,x1) x (y0,y1) with n x n cells, each cell
/// split along the diagonal from its lower-left to its upper-right corner.
inline TriMesh build_rect_mesh(int n, double x0, double x1, double y0, double y1) {
  if (n < 1) throw ConfigError("build_rect_mesh: n must be >= 1");
  if (!(x1 > x0) || !(y1 > y0)) throw ConfigError("build_rect_mesh: empty rectangle");

  TriMesh mesh;
  mesh.xmin = x0; mesh.xmax = x1; mesh.ymin = y0; mesh.ymax = y1;

  const int nv = n + 1;
  mesh.vertices.reserve(static_cast<std::size_t>(nv) * nv);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      mesh.vertices.push_back({x0 + (x1 - x0) * i / n, y0 + (y1 - y0) * j / n});

  auto vid = [nv](int i, int j) { return j * nv + i; };

  mesh.triangles.reserve(static_cast<std::size_t>(2) * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      // lower-right and upper-left triangle of the cell, both CCW
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }

  // deduplicated edge list + per-triangle edge indices (edge k opposite vertex k)
  std::map<std::pair<int, int>, int> edge_ids;
  mesh.triangle_edges.resize(mesh.triangles.size());
  std::vector<int> edge_use_count;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      auto key = std::minmax(a, b);
      auto it = edge_ids.find(key);
      int e;
      if (it == edge_ids.end()) {
        e = static_cast<int>(mesh.edges.size());
        edge_ids.emplace(key, e);
        mesh.edges.push_back({key.first, key.second});
        edge_use_count.push_back(0);
      } else {
        e = it->second;
      }
      mesh.triangle_edges[t][k] = e;
      ++edge_use_count[static_cast<std::size_t>(e)];
    }
  }

  // tag boundary edges by midpoint location (each edge lies within one side)
  const double tolx = 1e-12 * std::max(1.0, std::abs(x1 - x0));
  const double toly = 1e-12 * std::max(1.0, std::abs(y1 - y0));
  for (int e = 0; e < mesh.num_edges(); ++e) {
    if (edge_use_count[static_cast<std::size_t>(e)] != 1) continue;
    Vec2 m = mesh.edge_midpoint(e);
    if (std::abs(m.x - x0) < tolx)      mesh.boundary_edges[e] = BoundaryTag::Gamma1;
    else if (std::abs(m.x - x1) < tolx) mesh.boundary_edges[e] = BoundaryTag::Gamma2;
    else if (std::abs(m.y - y1) < toly) mesh.boundary_edges[e] = BoundaryTag::Gamma3;
    else if (std::abs(m.y - y0) < toly) mesh.boundary_edges[e] = BoundaryTag::Gamma4;
    else
      throw std::runtime_error("build_rect_mesh: boundary edge off the rectangle sides");
  }

  double hmax = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      Vec2 d = mesh.vertices[tri[(k + 1) % 3]] - mesh.vertices[tri[(k + 2) % 3]];
      hmax = std::max(hmax, d.norm());
    }
  }
  mesh.h = hmax;
  return mesh;
}

inline TriMesh build_unit_square_mesh(int n) { return build_rect_mesh(n, 0.0, 1.0, 0.0, 1.0); }

/// Plain-text mesh dump for debugging: "v x y", "t i j k", "b i j tag".
inline void dump_mesh(const TriMesh& mesh, std::ostream& os) {
  for (const auto& v : mesh.vertices) os << "v " << v.x << " " << v.y << "\n";
  for (const auto& t : mesh.triangles) os << "t " << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (const auto& [e, tag] : mesh.boundary_edges)
    os << "b " << mesh.edges[static_cast<std::size_t>(e)][0] << " "
       << mesh.edges[static_cast<std::size_t>(e)][1] << " " << to_string(tag) << "\n";
}

}  // namespace porofem

#endif
