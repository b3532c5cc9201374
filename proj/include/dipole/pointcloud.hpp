#pragma once

#include <memory>
#include <optional>

#include "dipole/kdtree.hpp"
#include "dipole/util.hpp"

namespace dipole {

struct OrientedPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::Zero();           // unit length after preprocessing
  double area = 0.0;                    // >= 0
  double geometry_moment = 1.0;         // per-point beta
  std::vector<double> appearance_moments;  // exactly k_appearance entries
};

struct OrientedPointCloud {
  std::vector<OrientedPoint> points;
  std::vector<Vec3> initial_normals;  // snapshot at load time, drives the normal loss
  int k_appearance = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  std::vector<Vec3> positions() const;
  void snapshot_initial_normals();
  void bounding_box(Vec3& lo, Vec3& hi) const;
  double bbox_diagonal() const;

  // Median over points of the distance to the nearest other point.
  double median_spacing() const;
  double mean_knn_spacing(int k = 8) const;
};

// k nearest point indices to `query`, ascending distance, ties by lower index.
// k = 0 yields an empty result; requires k <= cloud size.
std::vector<int> knn(const OrientedPointCloud& cloud, const Vec3& query, int k);

// PCA normal of a k-neighborhood: least-variance eigenvector of the local
// covariance. Sign agrees with the mean normal of already-oriented neighbors
// when any exist, otherwise points away from the local centroid. Degenerate
// (rank < 2) neighborhoods fall back to the global up vector and are marked.
struct PcaNormalResult {
  Vec3 normal;
  bool degenerate = false;
};
PcaNormalResult pca_normal_at(const OrientedPointCloud& cloud, const KdTree& tree, const Vec3& position,
                              int k, const std::vector<bool>* oriented = nullptr);
void pca_normals(OrientedPointCloud& cloud, int k);

// Per-point area = the point's 2D Voronoi cell within its k-neighborhood
// projected to the tangent plane, clipped to the neighborhood's bounding
// disk. Isolated points (all neighbors beyond 10x median spacing) get the
// median area and a warning.
void estimate_area_weights(OrientedPointCloud& cloud, int k,
                           std::vector<std::string>* warnings = nullptr);

}  // namespace dipole
