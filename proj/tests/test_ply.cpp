#include <cstdio>
#include <fstream>

#include "dipole/ply.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dipole;
using dipole::testing::sphere_cloud;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dipole_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("ascii ply with normals loads with unit moments") {
  TempFile f("tri.ply");
  std::ofstream out(f.path);
  out << "ply\nformat ascii 1.0\nelement vertex 3\n"
         "property float x\nproperty float y\nproperty float z\n"
         "property float nx\nproperty float ny\nproperty float nz\n"
         "end_header\n"
         "0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n";
  out.close();
  auto cloud = load_ply(f.path);
  REQUIRE(cloud.size() == 3);
  for (const auto& p : cloud.points) {
    CHECK(p.geometry_moment == 1.0);
    CHECK((p.normal - Vec3(0, 0, 1)).norm() == 0.0);
  }
  CHECK(cloud.initial_normals.size() == 3);
}

TEST_CASE("ply without normals gets unit pca normals") {
  TempFile f("plane.ply");
  std::ofstream out(f.path);
  out << "ply\nformat ascii 1.0\nelement vertex 9\n"
         "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) out << i << " " << j << " 0\n";
  out.close();
  auto cloud = load_ply(f.path);
  for (const auto& p : cloud.points)
    CHECK(p.normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("binary round trip keeps positions bit-exact") {
  auto cloud = sphere_cloud(1000, 1.0, 2);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud.points[i].geometry_moment = 0.5 + 0.001 * i;
    cloud.points[i].appearance_moments = {0.25, -0.5};
  }
  TempFile f("sphere.ply");
  save_ply(cloud, f.path);
  auto back = load_ply(f.path);
  REQUIRE(back.size() == cloud.size());
  CHECK(back.k_appearance == 2);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.points[i].position - cloud.points[i].position).norm() == 0.0);
    // normals are renormalized on load, so only positions are bit-exact
    CHECK((back.points[i].normal - cloud.points[i].normal).norm() <= 1e-12);
    CHECK(back.points[i].geometry_moment ==
          doctest::Approx(cloud.points[i].geometry_moment).epsilon(1e-6));
    CHECK(back.points[i].appearance_moments[1] == doctest::Approx(-0.5));
  }
}

TEST_CASE("parse errors carry line context, empty cloud rejected") {
  TempFile f("bad.ply");
  {
    std::ofstream out(f.path);
    out << "ply\nformat ascii 1.0\nelement vertex 2\n"
           "property float x\nproperty float y\nproperty float z\nend_header\n"
           "0 0 0\nnot a number\n";
  }
  CHECK_THROWS_WITH_AS(load_ply(f.path), doctest::Contains(":9:"), DataError);

  TempFile g("empty.ply");
  {
    std::ofstream out(g.path);
    out << "ply\nformat ascii 1.0\nelement vertex 0\n"
           "property float x\nproperty float y\nproperty float z\nend_header\n";
  }
  CHECK_THROWS_AS(load_ply(g.path), DataError);

  TempFile h("notply.ply");
  {
    std::ofstream out(h.path);
    out << "off\n1 2 3\n";
  }
  CHECK_THROWS_AS(load_ply(h.path), DataError);
}

TEST_CASE("missing appearance channels are seeded deterministically") {
  TempFile f("seeded.ply");
  std::ofstream out(f.path);
  out << "ply\nformat ascii 1.0\nelement vertex 2\n"
         "property float x\nproperty float y\nproperty float z\n"
         "property float nx\nproperty float ny\nproperty float nz\nend_header\n"
         "0 0 0 0 0 1\n1 0 0 0 0 1\n";
  out.close();
  auto a = load_ply(f.path, 3, 99);
  auto b = load_ply(f.path, 3, 99);
  auto c = load_ply(f.path, 3, 100);
  REQUIRE(a.k_appearance == 3);
  CHECK(a.points[0].appearance_moments == b.points[0].appearance_moments);
  CHECK(a.points[0].appearance_moments != c.points[0].appearance_moments);
  double spread = 0;
  for (const auto& p : a.points)
    for (double v : p.appearance_moments) spread = std::max(spread, std::fabs(v));
  CHECK(spread > 0);
  CHECK(spread < 1.0);  // std 0.1 variates stay small
}
