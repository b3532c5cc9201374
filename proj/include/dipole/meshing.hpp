#pragma once

#include "dipole/fields.hpp"

namespace dipole {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> vertex_normals;  // optional, empty or one per vertex

  bool empty() const { return triangles.empty(); }
  int euler_characteristic() const;  // V - E + F over unique undirected edges
};

// Scalar grid of the geometry field, node-centered: node (i,j,k) sits at
// lo + (i,j,k)/(n-1) * (hi-lo) per axis.
struct FieldGrid {
  std::array<int, 3> dims = {0, 0, 0};
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  std::vector<double> values;  // x fastest, then y, then z

  double at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i];
  }
  Vec3 node(int i, int j, int k) const;
};

// Evaluates geometry_field at every node, parallel over z-slabs. A bbox with
// lo = hi picks the cloud bounding box inflated by 5%.
FieldGrid sample_grid(const SceneModel& model, std::array<int, 3> resolution,
                      Vec3 lo = Vec3::Zero(), Vec3 hi = Vec3::Zero(), int workers = 0);

// Standard 256-case marching cubes with linear edge interpolation; vertices
// on shared edges are welded. Degenerate triangles are dropped. An empty
// mesh (no crossings) is valid output.
TriangleMesh marching_cubes(const FieldGrid& grid, double iso = 0.0);

// OBJ export with v/vn/f records at 9 significant digits, and the matching
// reader (positions, normals, triangulated faces).
void export_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_obj(const std::string& path);

// Mean distance of mesh vertices to the sphere |x - center| = radius, and
// the root mean square variant used by the regularization ablation.
double vertex_rms_to_sphere(const TriangleMesh& mesh, const Vec3& center, double radius);

// Uniform-by-area sampling of the mesh surface (for Chamfer comparisons).
std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int count, Rng& rng);

}  // namespace dipole
