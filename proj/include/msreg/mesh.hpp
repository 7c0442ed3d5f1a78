#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "msreg/parallel.hpp"
#include "msreg/volume.hpp"

namespace msreg {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Triangle surface mesh in voxel-index coordinates. Adjacency is the
// symmetric vertex neighbour relation induced by triangle edges.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::vector<int>> adjacency;

  bool empty() const { return triangles.empty(); }
};

struct SmoothingParams {
  double lambda = 0.5;  // step factor in [0,1]
  int iterations = 0;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw std::invalid_argument("SmoothingParams: lambda must be in [0,1]");
    if (iterations < 0) throw std::invalid_argument("SmoothingParams: iterations must be >= 0");
  }
};

namespace detail {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

}  // namespace detail

// Validates indices, drops exactly degenerate triangles and builds the
// adjacency sets. Isolated vertices are an error.
inline TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles) {
  TriMesh mesh;
  mesh.vertices = std::move(vertices);
  const int nv = static_cast<int>(mesh.vertices.size());
  mesh.triangles.reserve(triangles.size());
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= nv) throw std::invalid_argument("TriMesh: triangle index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (detail::triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) < 1e-12)
      continue;
    mesh.triangles.push_back(t);
  }
  mesh.adjacency.assign(mesh.vertices.size(), {});
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      mesh.adjacency[a].push_back(b);
      mesh.adjacency[b].push_back(a);
    }
  for (auto& n : mesh.adjacency) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  if (!mesh.triangles.empty())
    for (std::size_t i = 0; i < mesh.adjacency.size(); ++i)
      if (mesh.adjacency[i].empty()) throw std::invalid_argument("TriMesh: isolated vertex");
  return mesh;
}

// Closed and consistently oriented: every undirected edge is shared by
// exactly two triangles, and each directed edge appears exactly once.
inline bool is_closed(const TriMesh& mesh) {
  if (mesh.triangles.empty()) return false;
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      if (++directed[{a, b}] > 1) return false;
    }
  for (const auto& [edge, count] : directed) {
    auto it = directed.find({edge.second, edge.first});
    if (it == directed.end()) return false;
  }
  return true;
}

inline double surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles)
    area += detail::triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
  return area;
}

// --- marching cubes ---------------------------------------------------------
//
// Cell corners are numbered by coordinate bits (x = bit 0, y = bit 1,
// z = bit 2); the 12 cell edges are listed in a fixed order. The 256-entry
// triangle table is generated at first use by walking the iso-contour on
// each cell face: on a face the contour leaves through an edge whose first
// cycle corner is inside and enters through one whose second corner is
// inside; each exit pairs with the next entry along the face cycle. That
// pairing connects the positive (inside) corners across ambiguous faces, is
// decided per face only, and therefore never produces cracks between
// neighbouring cells.

namespace detail::mc {

constexpr int kEdgeCorners[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                     {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
constexpr int kEdgeAxis[12] = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};

// Corner cycles are counter-clockwise seen from outside the cell.
constexpr int kFaceCycles[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                   {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};

inline Vec3 corner_pos(int corner) {
  return {static_cast<double>(corner & 1), static_cast<double>((corner >> 1) & 1),
          static_cast<double>((corner >> 2) & 1)};
}

inline Vec3 edge_midpoint(int edge) {
  return 0.5 * (corner_pos(kEdgeCorners[edge][0]) + corner_pos(kEdgeCorners[edge][1]));
}

inline int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    const auto& c = kEdgeCorners[e];
    if ((c[0] == a && c[1] == b) || (c[0] == b && c[1] == a)) return e;
  }
  return -1;
}

using TriangleList = std::vector<std::array<int, 3>>;

inline std::array<TriangleList, 256> build_table() {
  std::array<TriangleList, 256> table;
  for (int config = 0; config < 256; ++config) {
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& cycle : kFaceCycles) {
      for (int k = 0; k < 4; ++k) {
        const int a = cycle[k], b = cycle[(k + 1) % 4];
        const bool a_in = (config >> a) & 1, b_in = (config >> b) & 1;
        if (!(a_in && !b_in)) continue;  // exit edge
        for (int step = 1; step <= 3; ++step) {
          const int j = (k + step) % 4;
          const int c = cycle[j], d = cycle[(j + 1) % 4];
          if (!((config >> c) & 1) && ((config >> d) & 1)) {  // entry edge
            next[edge_between(a, b)] = edge_between(c, d);
            break;
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      int e = start;
      do {
        loop.push_back(e);
        used[e] = true;
        e = next[e];
      } while (e != start);
      // Orient outward (positive signed volume around inside corners).
      std::reverse(loop.begin(), loop.end());
      if (loop.size() < 3) continue;
      // Fan-triangulate; prefer a root that avoids zero-area triangles.
      const int len = static_cast<int>(loop.size());
      int root = 0;
      for (int r = 0; r < len; ++r) {
        bool ok = true;
        for (int k = 1; k + 1 < len && ok; ++k) {
          const Vec3 a = edge_midpoint(loop[r]);
          const Vec3 b = edge_midpoint(loop[(r + k) % len]);
          const Vec3 c = edge_midpoint(loop[(r + k + 1) % len]);
          ok = triangle_area(a, b, c) > 1e-9;
        }
        if (ok) {
          root = r;
          break;
        }
      }
      for (int k = 1; k + 1 < len; ++k)
        table[config].push_back({loop[root], loop[(root + k) % len], loop[(root + k + 1) % len]});
    }
  }
  return table;
}

inline const std::array<TriangleList, 256>& table() {
  static const std::array<TriangleList, 256> t = build_table();
  return t;
}

}  // namespace detail::mc

// Extracts the closed iso-surface at 0.5 of the binary indicator of
// target_label. Samples outside the grid count as background, so label
// regions touching the grid boundary are capped by faces just outside it.
// Vertices lie on lattice edge midpoints, in voxel-index coordinates.
inline TriMesh marching_cubes(const LabelVolume& labels, int target_label) {
  const auto& d = labels.grid.dims;
  if (d[0] < 2 || d[1] < 2 || d[2] < 2)
    throw std::invalid_argument("marching_cubes: grid dims must be >= 2 per axis");

  // Padded indicator over sample positions [-1 .. n] per axis.
  const int px = d[0] + 2, py = d[1] + 2, pz = d[2] + 2;
  std::vector<unsigned char> inside(static_cast<std::size_t>(px) * py * pz, 0);
  const auto pidx = [&](int x, int y, int z) {
    return (static_cast<std::size_t>(z + 1) * py + (y + 1)) * px + (x + 1);
  };
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        inside[pidx(x, y, z)] = labels.at(x, y, z) == target_label ? 1 : 0;

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::unordered_map<std::int64_t, int> edge_vertex;
  const auto vertex_key = [&](int x, int y, int z, int axis) {
    return ((static_cast<std::int64_t>(z + 1) * py + (y + 1)) * px + (x + 1)) * 3 + axis;
  };

  const auto& table = detail::mc::table();
  for (int z = -1; z < d[2]; ++z)
    for (int y = -1; y < d[1]; ++y)
      for (int x = -1; x < d[0]; ++x) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (inside[pidx(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1))]) config |= 1 << c;
        if (config == 0 || config == 255) continue;
        for (const auto& tri : table[config]) {
          std::array<int, 3> ids;
          for (int k = 0; k < 3; ++k) {
            const int e = tri[k];
            const int a = detail::mc::kEdgeCorners[e][0];
            const int ex = x + (a & 1), ey = y + ((a >> 1) & 1), ez = z + ((a >> 2) & 1);
            const std::int64_t key = vertex_key(ex, ey, ez, detail::mc::kEdgeAxis[e]);
            auto it = edge_vertex.find(key);
            if (it == edge_vertex.end()) {
              Vec3 pos{static_cast<double>(ex), static_cast<double>(ey), static_cast<double>(ez)};
              pos[detail::mc::kEdgeAxis[e]] += 0.5;
              it = edge_vertex.emplace(key, static_cast<int>(vertices.size())).first;
              vertices.push_back(pos);
            }
            ids[k] = it->second;
          }
          triangles.push_back(ids);
        }
      }
  if (triangles.empty()) return TriMesh{};
  return make_mesh(std::move(vertices), std::move(triangles));
}

// One simultaneous (Jacobi) relaxation sweep per iteration:
// x_i <- x_i + lambda * mean_{j in N_i}(x_j - x_i). Connectivity unchanged.
inline TriMesh laplacian_smooth(const TriMesh& mesh, const SmoothingParams& params) {
  params.validate();
  for (const auto& n : mesh.adjacency)
    if (n.empty() && !mesh.vertices.empty())
      throw std::invalid_argument("laplacian_smooth: mesh has an isolated vertex");
  TriMesh out = mesh;
  std::vector<Vec3> next(out.vertices.size());
  for (int it = 0; it < params.iterations; ++it) {
    parallel_for(0, static_cast<std::int64_t>(out.vertices.size()), [&](std::int64_t i) {
      const auto& neighbours = out.adjacency[static_cast<std::size_t>(i)];
      Vec3 delta{0.0, 0.0, 0.0};
      for (int j : neighbours) delta = delta + (out.vertices[j] - out.vertices[i]);
      next[i] = out.vertices[i] + (params.lambda / static_cast<double>(neighbours.size())) * delta;
    });
    out.vertices.swap(next);
  }
  return out;
}

// Enclosed volume via the divergence theorem: |sum of signed tetrahedra to
// the origin|. Requires a closed oriented mesh.
inline double enclosed_volume(const TriMesh& mesh) {
  if (!is_closed(mesh)) throw std::invalid_argument("enclosed_volume: mesh is not closed");
  double six_v = 0.0;
  for (const auto& t : mesh.triangles)
    six_v += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]]));
  return std::abs(six_v) / 6.0;
}

// Uniform rescale about the vertex centroid so the enclosed volume matches
// target.
inline TriMesh rescale_to_volume(const TriMesh& mesh, double target) {
  if (!(target > 0.0)) throw std::invalid_argument("rescale_to_volume: target must be positive");
  const double current = enclosed_volume(mesh);
  if (!(current > 0.0)) throw std::invalid_argument("rescale_to_volume: mesh volume is not positive");
  const double s = std::cbrt(target / current);
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& v : mesh.vertices) centroid = centroid + v;
  centroid = (1.0 / static_cast<double>(mesh.vertices.size())) * centroid;
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = centroid + s * (v - centroid);
  return out;
}

// Fills voxels whose center lies inside the closed mesh, decided by ray
// parity along +x. Rays are offset by a fixed sub-voxel perturbation; rows
// that still produce a degenerate hit (an intersection within epsilon of a
// triangle edge, or a ray-parallel triangle nearby) retry with the next
// perturbation in a fixed sequence.
inline LabelVolume voxelize(const TriMesh& mesh, const GridInfo& grid, int label) {
  if (label <= 0) throw std::invalid_argument("voxelize: label must be positive");
  LabelVolume out = LabelVolume::zeros(grid);
  if (mesh.triangles.empty()) return out;
  if (!is_closed(mesh)) throw std::invalid_argument("voxelize: mesh is not closed");

  const auto& d = grid.dims;
  // Bin triangles by their integer (y, z) bounding ranges.
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(d[1]) * d[2]);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    double ylo = 1e30, yhi = -1e30, zlo = 1e30, zhi = -1e30;
    for (int k = 0; k < 3; ++k) {
      const auto& v = mesh.vertices[tri[k]];
      ylo = std::min(ylo, v[1]);
      yhi = std::max(yhi, v[1]);
      zlo = std::min(zlo, v[2]);
      zhi = std::max(zhi, v[2]);
    }
    const int y0 = std::max(0, static_cast<int>(std::floor(ylo)));
    const int y1 = std::min(d[1] - 1, static_cast<int>(std::ceil(yhi)));
    const int z0 = std::max(0, static_cast<int>(std::floor(zlo)));
    const int z1 = std::min(d[2] - 1, static_cast<int>(std::ceil(zhi)));
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y) bins[static_cast<std::size_t>(z) * d[1] + y].push_back(t);
  }

  parallel_for(0, static_cast<std::int64_t>(d[1]) * d[2], [&](std::int64_t row) {
    const int y = static_cast<int>(row % d[1]);
    const int z = static_cast<int>(row / d[1]);
    const auto& candidates = bins[static_cast<std::size_t>(row)];
    std::vector<double> crossings;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double ry = y + 2.6180339887e-4 * (attempt + 1);
      const double rz = z + 1.7320508076e-4 * (attempt + 1);
      crossings.clear();
      bool degenerate = false;
      for (int t : candidates) {
        const auto& tri = mesh.triangles[t];
        const Vec3& a = mesh.vertices[tri[0]];
        const Vec3& b = mesh.vertices[tri[1]];
        const Vec3& c = mesh.vertices[tri[2]];
        const double denom = (b[1] - a[1]) * (c[2] - a[2]) - (b[2] - a[2]) * (c[1] - a[1]);
        if (std::abs(denom) < 1e-12) continue;  // ray-parallel; neighbours carry the parity
        const double lb = ((ry - a[1]) * (c[2] - a[2]) - (rz - a[2]) * (c[1] - a[1])) / denom;
        const double lc = ((b[1] - a[1]) * (rz - a[2]) - (b[2] - a[2]) * (ry - a[1])) / denom;
        const double la = 1.0 - lb - lc;
        const double tol = 1e-9;
        if (la < -tol || lb < -tol || lc < -tol) continue;
        if (la < tol || lb < tol || lc < tol) {
          degenerate = true;
          break;
        }
        crossings.push_back(la * a[0] + lb * b[0] + lc * c[0]);
      }
      if (degenerate) continue;
      std::sort(crossings.begin(), crossings.end());
      std::size_t k = 0;
      for (int x = 0; x < d[0]; ++x) {
        while (k < crossings.size() && crossings[k] < x) ++k;
        if (k % 2 == 1) out.at(x, y, z) = label;
      }
      return;
    }
    throw std::runtime_error("voxelize: could not find a non-degenerate ray for a row");
  });
  return out;
}

// --- mesh file format (OFF-compatible) --------------------------------------

inline void write_mesh_off(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << "OFF\n" << mesh.vertices.size() << " " << mesh.triangles.size() << " 0\n";
  char line[160];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", v[0], v[1], v[2]);
    out << line;
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline TriMesh read_mesh_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string magic;
  in >> magic;
  if (magic != "OFF") throw std::runtime_error("not an OFF file: " + path);
  std::size_t nv = 0, nf = 0, ne = 0;
  in >> nv >> nf >> ne;
  std::vector<Vec3> vertices(nv);
  for (auto& v : vertices) in >> v[0] >> v[1] >> v[2];
  std::vector<std::array<int, 3>> triangles(nf);
  for (auto& t : triangles) {
    int arity = 0;
    in >> arity >> t[0] >> t[1] >> t[2];
    if (arity != 3) throw std::runtime_error("only triangle faces are supported: " + path);
  }
  if (!in) throw std::runtime_error("truncated OFF file: " + path);
  return make_mesh(std::move(vertices), std::move(triangles));
}

}  // namespace msreg
