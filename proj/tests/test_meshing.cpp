#include <cmath>
#include <cstdio>
#include <map>

#include "dipole/meshing.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dipole;
using dipole::testing::sphere_cloud;

namespace {

FieldGrid analytic_grid(int n, const std::function<double(const Vec3&)>& f, double half = 1.5) {
  FieldGrid g;
  g.dims = {n, n, n};
  g.lo = Vec3::Constant(-half);
  g.hi = Vec3::Constant(half);
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        g.values[(static_cast<std::size_t>(k) * n + j) * n + i] = f(g.node(i, j, k));
  return g;
}

// every undirected edge of a closed level set inside the box is shared by
// exactly two triangles, once per direction
void check_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    CHECK(count == 1);
    auto rev = directed.find({edge.second, edge.first});
    bool paired = rev != directed.end() && rev->second == 1;
    CHECK(paired);
  }
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dipole_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("sample grid matches pointwise field evaluation") {
  SceneModel model;
  model.cloud = sphere_cloud(400);
  model.kernel.epsilon = 0.2;
  model.prepare();
  auto grid = sample_grid(model, {2, 2, 2}, Vec3(-1, -1, -1), Vec3(1, 1, 1));
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i)
        CHECK(grid.at(i, j, k) == geometry_field(model, grid.node(i, j, k)));

  for (auto& p : model.cloud.points) p.geometry_moment = 0.0;
  model.refresh_moments();
  auto flat = sample_grid(model, {5, 4, 3});
  for (double v : flat.values) CHECK(v == 0.5);
  // default bbox inflates the cloud bounds by 5%
  Vec3 lo, hi;
  model.cloud.bounding_box(lo, hi);
  CHECK(flat.lo.x() < lo.x());
  CHECK(flat.hi.x() > hi.x());
}

TEST_CASE("sphere model grid changes sign only near the surface") {
  SceneModel model;
  model.cloud = sphere_cloud(4000);
  model.kernel.epsilon = 0.08;
  model.beta_bh = 8.0;
  model.prepare();
  auto grid = sample_grid(model, {33, 33, 33}, Vec3::Constant(-1.5), Vec3::Constant(1.5));
  double cell = 3.0 / 32.0;
  for (int k = 0; k < 33; ++k)
    for (int j = 0; j < 33; ++j)
      for (int i = 0; i < 33; ++i) {
        double r = grid.node(i, j, k).norm();
        if (r < 1.0 - cell) CHECK(grid.at(i, j, k) < 0.0);
        if (r > 1.0 + cell) CHECK(grid.at(i, j, k) > 0.0);
      }
}

TEST_CASE("marching cubes on constant-sign grids is empty") {
  auto pos = analytic_grid(8, [](const Vec3&) { return 1.0; });
  CHECK(marching_cubes(pos).empty());
  auto neg = analytic_grid(8, [](const Vec3&) { return -0.5; });
  CHECK(marching_cubes(neg).empty());
  auto bad = analytic_grid(4, [](const Vec3&) { return 1.0; });
  bad.values[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(marching_cubes(bad), NumericalError);
}

TEST_CASE("marching cubes of an analytic sphere: accuracy, topology, watertightness") {
  int n = 64;
  auto grid = analytic_grid(n, [](const Vec3& x) { return x.norm() - 1.0; });
  auto mesh = marching_cubes(grid);
  REQUIRE(!mesh.empty());
  double cell_diag = (3.0 / (n - 1)) * std::sqrt(3.0);
  for (const Vec3& v : mesh.vertices) CHECK(std::fabs(v.norm() - 1.0) <= 1.5 * cell_diag);
  CHECK(mesh.euler_characteristic() == 2);
  check_watertight(mesh);
}

TEST_CASE("marching cubes of an axis-aligned slab gives two planar sheets") {
  int n = 32;
  // inside for |z| < 0.4
  auto grid = analytic_grid(n, [](const Vec3& x) { return std::fabs(x.z()) - 0.4; });
  auto mesh = marching_cubes(grid);
  REQUIRE(!mesh.empty());
  double cell = 3.0 / (n - 1);
  int near_pos = 0, near_neg = 0;
  for (const Vec3& v : mesh.vertices) {
    bool pos = std::fabs(v.z() - 0.4) <= cell;
    bool neg = std::fabs(v.z() + 0.4) <= cell;
    CHECK((pos || neg));
    near_pos += pos;
    near_neg += neg;
  }
  CHECK(near_pos > 0);
  CHECK(near_neg > 0);
}

TEST_CASE("obj export round trip") {
  TempFile f("mesh.obj");
  TriangleMesh tet;
  tet.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  tet.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  export_obj(tet, f.path);
  auto back = load_obj(f.path);
  REQUIRE(back.vertices.size() == 4);
  REQUIRE(back.triangles.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK((back.vertices[i] - tet.vertices[i]).norm() == 0.0);
  CHECK(back.triangles[2] == tet.triangles[2]);

  auto grid = analytic_grid(16, [](const Vec3& x) { return x.norm() - 1.0; });
  auto mesh = marching_cubes(grid);
  mesh.vertex_normals.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    mesh.vertex_normals[i] = mesh.vertices[i].normalized();
  TempFile g("sphere.obj");
  export_obj(mesh, g.path);
  auto round = load_obj(g.path);
  REQUIRE(round.vertices.size() == mesh.vertices.size());
  REQUIRE(round.vertex_normals.size() == mesh.vertex_normals.size());
  double worst = 0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    worst = std::max(worst, (round.vertices[i] - mesh.vertices[i]).norm());
  CHECK(worst <= 1e-8);  // 9 significant digits in the text format

  TriangleMesh empty;
  TempFile h("empty.obj");
  export_obj(empty, h.path);
  auto e = load_obj(h.path);
  CHECK(e.empty());
  CHECK_THROWS_AS(load_obj("/nonexistent/file.obj"), DataError);
}

TEST_CASE("regularized kernel reconstructs a noisy sphere better than the desingularized one") {
  auto cloud = sphere_cloud(2000);
  Rng rng(17);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& p : cloud.points) p.position += Vec3(noise(rng), noise(rng), noise(rng));

  auto mesh_with = [&](KernelParams kp) {
    SceneModel model;
    model.cloud = cloud;
    model.kernel = kp;
    model.beta_bh = 4.0;
    model.prepare();
    auto grid = sample_grid(model, {48, 48, 48}, Vec3::Constant(-1.4), Vec3::Constant(1.4));
    return marching_cubes(grid);
  };
  KernelParams reg;
  reg.epsilon = 0.08;
  KernelParams desing;
  desing.desingularized = true;
  desing.desing_delta = 0.08;
  auto mesh_reg = mesh_with(reg);
  auto mesh_des = mesh_with(desing);
  REQUIRE(!mesh_reg.empty());
  REQUIRE(!mesh_des.empty());
  double rms_reg = vertex_rms_to_sphere(mesh_reg, Vec3::Zero(), 1.0);
  double rms_des = vertex_rms_to_sphere(mesh_des, Vec3::Zero(), 1.0);
  CHECK(rms_reg < rms_des);
}

TEST_CASE("mesh surface sampling stays on the surface") {
  auto grid = analytic_grid(24, [](const Vec3& x) { return x.norm() - 1.0; });
  auto mesh = marching_cubes(grid);
  Rng rng(3);
  auto pts = sample_mesh_surface(mesh, 500, rng);
  REQUIRE(pts.size() == 500);
  double cell_diag = (3.0 / 23.0) * std::sqrt(3.0);
  for (const Vec3& p : pts) CHECK(std::fabs(p.norm() - 1.0) <= 1.5 * cell_diag);
}
