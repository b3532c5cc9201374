#include "dipole/meshing.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dipole/mc_tables.hpp"

namespace dipole {

int TriangleMesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return static_cast<int>(vertices.size()) - static_cast<int>(edges.size()) +
         static_cast<int>(triangles.size());
}

Vec3 FieldGrid::node(int i, int j, int k) const {
  Vec3 f(dims[0] > 1 ? double(i) / (dims[0] - 1) : 0.0,
         dims[1] > 1 ? double(j) / (dims[1] - 1) : 0.0,
         dims[2] > 1 ? double(k) / (dims[2] - 1) : 0.0);
  return lo + f.cwiseProduct(hi - lo);
}

FieldGrid sample_grid(const SceneModel& model, std::array<int, 3> resolution, Vec3 lo, Vec3 hi,
                      int workers) {
  for (int d : resolution)
    if (d < 2) throw DataError("sample_grid: resolution must be at least 2 per axis");
  FieldGrid grid;
  grid.dims = resolution;
  if ((hi - lo).norm() == 0.0) {
    model.cloud.bounding_box(lo, hi);
    Vec3 pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  grid.lo = lo;
  grid.hi = hi;
  grid.values.assign(static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2], 0.0);
  parallel_for(
      resolution[2],
      [&](std::int64_t k0, std::int64_t k1, int) {
        for (std::int64_t k = k0; k < k1; ++k)
          for (int j = 0; j < resolution[1]; ++j)
            for (int i = 0; i < resolution[0]; ++i)
              grid.values[(static_cast<std::size_t>(k) * resolution[1] + j) * resolution[0] + i] =
                  geometry_field(model, grid.node(i, static_cast<int>(j), static_cast<int>(k)));
      },
      workers);
  return grid;
}

TriangleMesh marching_cubes(const FieldGrid& grid, double iso) {
  for (double v : grid.values)
    if (!std::isfinite(v)) throw NumericalError("marching_cubes: non-finite grid value");
  TriangleMesh mesh;
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  auto node_index = [&](int i, int j, int k) {
    return (static_cast<std::int64_t>(k) * ny + j) * nx + i;
  };
  // vertex welding: each crossing lives on a grid edge, keyed by the lower
  // node's linear index and the edge axis
  std::unordered_map<std::int64_t, int> edge_vertex;
  auto vertex_on_edge = [&](int i, int j, int k, int axis) {
    std::int64_t key = node_index(i, j, k) * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    int i2 = i + (axis == 0), j2 = j + (axis == 1), k2 = k + (axis == 2);
    double v0 = grid.at(i, j, k), v1 = grid.at(i2, j2, k2);
    double t = v1 == v0 ? 0.5 : (iso - v0) / (v1 - v0);
    t = std::clamp(t, 0.0, 1.0);
    Vec3 p = grid.node(i, j, k) * (1.0 - t) + grid.node(i2, j2, k2) * t;
    int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, idx);
    return idx;
  };
  double cell_diag2 = ((grid.hi - grid.lo).cwiseQuotient(
                           Vec3(nx - 1, ny - 1, nz - 1)))
                          .squaredNorm();
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + kMcCorner[c][0], j + kMcCorner[c][1], k + kMcCorner[c][2]) < iso)
            cube |= 1 << c;
        const int* tri = kMcTriTable[cube];
        for (int e = 0; tri[e] != -1; e += 3) {
          int vi[3];
          for (int v = 0; v < 3; ++v) {
            int edge = tri[e + v];
            int a = kMcEdge[edge][0], b = kMcEdge[edge][1];
            // lower node and axis of this cube edge
            int ax = kMcCorner[a][0] != kMcCorner[b][0]   ? 0
                     : kMcCorner[a][1] != kMcCorner[b][1] ? 1
                                                          : 2;
            int li = i + std::min(kMcCorner[a][0], kMcCorner[b][0]);
            int lj = j + std::min(kMcCorner[a][1], kMcCorner[b][1]);
            int lk = k + std::min(kMcCorner[a][2], kMcCorner[b][2]);
            vi[v] = vertex_on_edge(li, lj, lk, ax);
          }
          if (vi[0] == vi[1] || vi[1] == vi[2] || vi[0] == vi[2]) continue;
          Vec3 n = (mesh.vertices[vi[1]] - mesh.vertices[vi[0]])
                       .cross(mesh.vertices[vi[2]] - mesh.vertices[vi[0]]);
          if (0.25 * n.squaredNorm() <= 1e-24 * cell_diag2 * cell_diag2) continue;
          mesh.triangles.push_back({vi[0], vi[1], vi[2]});
        }
      }
  return mesh;
}

void export_obj(const TriangleMesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw DataError("export_obj: cannot open " + path);
  bool with_normals = mesh.vertex_normals.size() == mesh.vertices.size() && !mesh.vertices.empty();
  for (const Vec3& v : mesh.vertices)
    std::fprintf(f, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
  if (with_normals)
    for (const Vec3& n : mesh.vertex_normals)
      std::fprintf(f, "vn %.9g %.9g %.9g\n", n.x(), n.y(), n.z());
  for (const auto& t : mesh.triangles) {
    if (with_normals)
      std::fprintf(f, "f %d//%d %d//%d %d//%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1,
                   t[2] + 1, t[2] + 1);
    else
      std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
  }
  if (std::fclose(f) != 0) throw DataError("export_obj: write failure on " + path);
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_obj: cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError("load_obj: " + path + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v" || tag == "vn") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) fail("malformed " + tag + " record");
      if (tag == "v")
        mesh.vertices.emplace_back(x, y, z);
      else
        mesh.vertex_normals.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> ids;
      std::string tok;
      while (ss >> tok) {
        // accept v, v/t, v//n, v/t/n
        int v = 0;
        if (std::sscanf(tok.c_str(), "%d", &v) != 1) fail("malformed face token " + tok);
        if (v < 0) v = static_cast<int>(mesh.vertices.size()) + 1 + v;
        if (v < 1 || v > static_cast<int>(mesh.vertices.size())) fail("face index out of range");
        ids.push_back(v - 1);
      }
      if (ids.size() < 3) fail("face with fewer than 3 vertices");
      for (std::size_t t = 1; t + 1 < ids.size(); ++t)
        mesh.triangles.push_back({ids[0], ids[t], ids[t + 1]});
    }
  }
  return mesh;
}

double vertex_rms_to_sphere(const TriangleMesh& mesh, const Vec3& center, double radius) {
  if (mesh.vertices.empty()) throw DataError("vertex_rms_to_sphere: empty mesh");
  KahanSum sum;
  for (const Vec3& v : mesh.vertices) {
    double d = (v - center).norm() - radius;
    sum.add(d * d);
  }
  return std::sqrt(sum.value() / mesh.vertices.size());
}

std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int count, Rng& rng) {
  if (mesh.empty()) throw DataError("sample_mesh_surface: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tr = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[tr[1]] - mesh.vertices[tr[0]])
                       .cross(mesh.vertices[tr[2]] - mesh.vertices[tr[0]])
                       .norm();
    cum[t] = total;
  }
  std::uniform_real_distribution<double> uni(0.0, total);
  std::vector<Vec3> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    auto it = std::lower_bound(cum.begin(), cum.end(), uni(rng));
    const auto& tr = mesh.triangles[it - cum.begin()];
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.push_back(mesh.vertices[tr[0]] * (1.0 - u - v) + mesh.vertices[tr[1]] * u +
                  mesh.vertices[tr[2]] * v);
  }
  return out;
}

}  // namespace dipole
