#pragma once

#include <random>

#include "dipole/pointcloud.hpp"

namespace dipole::testing {

// Fibonacci-lattice sphere sampling: near-uniform, deterministic.
inline OrientedPointCloud sphere_cloud(int m, double radius = 1.0, int k_appearance = 0) {
  OrientedPointCloud cloud;
  cloud.k_appearance = k_appearance;
  cloud.points.resize(m);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < m; ++i) {
    double z = 1.0 - 2.0 * (i + 0.5) / m;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * i;
    Vec3 n(r * std::cos(phi), r * std::sin(phi), z);
    OrientedPoint& p = cloud.points[i];
    p.normal = n;
    p.position = radius * n;
    p.area = 4.0 * kPi * radius * radius / m;
    p.geometry_moment = 1.0;
    p.appearance_moments.assign(k_appearance, 0.0);
  }
  cloud.snapshot_initial_normals();
  return cloud;
}

inline OrientedPointCloud random_cloud(int m, std::uint64_t seed, int k_appearance = 0) {
  OrientedPointCloud cloud;
  cloud.k_appearance = k_appearance;
  cloud.points.resize(m);
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& p : cloud.points) {
    p.position = Vec3(uni(rng), uni(rng), uni(rng));
    p.normal = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
    p.area = 0.5 + 0.5 * std::fabs(uni(rng));
    p.geometry_moment = uni(rng);
    p.appearance_moments.resize(k_appearance);
    for (double& a : p.appearance_moments) a = uni(rng);
  }
  cloud.snapshot_initial_normals();
  return cloud;
}

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

}  // namespace dipole::testing
