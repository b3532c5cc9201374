#include "dipole/pointcloud.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iostream>

namespace dipole {

std::vector<Vec3> OrientedPointCloud::positions() const {
  std::vector<Vec3> p;
  p.reserve(points.size());
  for (const auto& q : points) p.push_back(q.position);
  return p;
}

void OrientedPointCloud::snapshot_initial_normals() {
  initial_normals.clear();
  initial_normals.reserve(points.size());
  for (const auto& q : points) initial_normals.push_back(q.normal);
}

void OrientedPointCloud::bounding_box(Vec3& lo, Vec3& hi) const {
  lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  hi = -lo;
  for (const auto& q : points) {
    lo = lo.cwiseMin(q.position);
    hi = hi.cwiseMax(q.position);
  }
}

double OrientedPointCloud::bbox_diagonal() const {
  if (points.empty()) return 0.0;
  Vec3 lo, hi;
  bounding_box(lo, hi);
  return (hi - lo).norm();
}

double OrientedPointCloud::median_spacing() const {
  if (points.size() < 2) return 0.0;
  KdTree tree(positions());
  std::vector<double> d;
  d.reserve(points.size());
  for (const auto& q : points) {
    auto nb = tree.knn(q.position, 2);  // [self, nearest other]
    d.push_back((points[nb[1]].position - q.position).norm());
  }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

double OrientedPointCloud::mean_knn_spacing(int k) const {
  if (points.size() < 2) return 0.0;
  KdTree tree(positions());
  int kk = std::min<int>(k + 1, static_cast<int>(points.size()));
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& q : points) {
    auto nb = tree.knn(q.position, kk);
    for (std::size_t j = 1; j < nb.size(); ++j) {
      sum += (points[nb[j]].position - q.position).norm();
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::vector<int> knn(const OrientedPointCloud& cloud, const Vec3& query, int k) {
  if (k == 0) return {};
  if (k > static_cast<int>(cloud.size()))
    throw DataError("knn: k exceeds point count");
  KdTree tree(cloud.positions());
  return tree.knn(query, k);
}

PcaNormalResult pca_normal_at(const OrientedPointCloud& cloud, const KdTree& tree,
                              const Vec3& position, int k, const std::vector<bool>* oriented) {
  auto nb = tree.knn(position, std::min<int>(k, static_cast<int>(cloud.size())));
  Vec3 centroid = Vec3::Zero();
  for (int i : nb) centroid += cloud.points[i].position;
  centroid /= static_cast<double>(nb.size());
  Mat3 cov = Mat3::Zero();
  for (int i : nb) {
    Vec3 d = cloud.points[i].position - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 evals = es.eigenvalues();  // ascending
  PcaNormalResult out;
  if (evals[1] <= 1e-12 * std::max(evals[2], 1e-300)) {
    // rank < 2: collinear or coincident neighborhood
    out.normal = Vec3(0, 0, 1);
    out.degenerate = true;
    return out;
  }
  Vec3 n = es.eigenvectors().col(0).normalized();
  Vec3 mean_oriented = Vec3::Zero();
  if (oriented) {
    for (int i : nb)
      if ((*oriented)[i]) mean_oriented += cloud.points[i].normal;
  }
  if (mean_oriented.squaredNorm() > 1e-20) {
    if (n.dot(mean_oriented) < 0) n = -n;
  } else if (n.dot(position - centroid) < 0) {
    n = -n;  // outward from local centroid
  }
  out.normal = n;
  return out;
}

void pca_normals(OrientedPointCloud& cloud, int k) {
  if (k < 3) throw DataError("pca_normals: k must be >= 3");
  if (cloud.empty()) throw DataError("pca_normals: empty cloud");
  KdTree tree(cloud.positions());
  std::vector<bool> oriented(cloud.size(), false);
  std::vector<Vec3> normals(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    normals[i] = pca_normal_at(cloud, tree, cloud.points[i].position, k, &oriented).normal;
  for (std::size_t i = 0; i < cloud.size(); ++i) cloud.points[i].normal = normals[i];
}

namespace {

// Clip a convex polygon by the half-plane {q : q . dir <= offset}.
void clip_halfplane(std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& dir, double offset) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(poly.size() + 2);
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[(i + 1) % n];
    double da = a.dot(dir) - offset;
    double db = b.dot(dir) - offset;
    if (da <= 0) out.push_back(a);
    if ((da < 0 && db > 0) || (da > 0 && db < 0)) {
      double s = da / (da - db);
      out.push_back(a + s * (b - a));
    }
  }
  poly = std::move(out);
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::fabs(a);
}

}  // namespace

void estimate_area_weights(OrientedPointCloud& cloud, int k, std::vector<std::string>* warnings) {
  if (cloud.empty()) throw DataError("estimate_area_weights: empty cloud");
  auto warn = [&](const std::string& msg) {
    if (warnings)
      warnings->push_back(msg);
    else
      std::cerr << "warning: " << msg << "\n";
  };
  if (cloud.size() == 1) {
    cloud.points[0].area = 1.0;
    warn("estimate_area_weights: single point, defaulting area to 1");
    return;
  }
  if (k < 4) throw DataError("estimate_area_weights: k must be >= 4");
  KdTree tree(cloud.positions());
  double med = cloud.median_spacing();
  std::vector<int> isolated;
  int kk = std::min<int>(k + 1, static_cast<int>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    OrientedPoint& pt = cloud.points[i];
    auto nb = tree.knn(pt.position, kk);
    // tangent-plane basis
    Vec3 n = pt.normal;
    if (n.squaredNorm() < 0.5) n = Vec3(0, 0, 1);
    Vec3 u = std::fabs(n.z()) < 0.9 ? n.cross(Vec3(0, 0, 1)).normalized()
                                    : n.cross(Vec3(1, 0, 0)).normalized();
    Vec3 v = n.cross(u);
    std::vector<Eigen::Vector2d> projected;
    double max_r = 0;
    double min_r = std::numeric_limits<double>::infinity();
    for (int j : nb) {
      if (j == static_cast<int>(i)) continue;
      Vec3 d = cloud.points[j].position - pt.position;
      projected.emplace_back(d.dot(u), d.dot(v));
      double r = d.norm();
      max_r = std::max(max_r, r);
      min_r = std::min(min_r, r);
    }
    if (med > 0 && min_r > 10.0 * med) {
      isolated.push_back(static_cast<int>(i));
      continue;
    }
    // bounding disk as a 32-gon around the point
    std::vector<Eigen::Vector2d> poly;
    double radius = max_r > 0 ? max_r : 1.0;
    for (int s = 0; s < 32; ++s) {
      double ang = 2.0 * kPi * s / 32.0;
      poly.emplace_back(radius * std::cos(ang), radius * std::sin(ang));
    }
    for (const auto& q : projected) {
      double r2 = q.squaredNorm();
      if (r2 < 1e-24) continue;  // coincident neighbor contributes no bisector
      clip_halfplane(poly, q, 0.5 * r2);
      if (poly.empty()) break;
    }
    double a = poly.empty() ? 0.0 : polygon_area(poly);
    if (!(a > 0) || !std::isfinite(a)) a = med > 0 ? med * med : 1.0;
    pt.area = a;
  }
  if (!isolated.empty()) {
    std::vector<double> areas;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.points[i].area > 0) areas.push_back(cloud.points[i].area);
    double med_area = 1.0;
    if (!areas.empty()) {
      std::nth_element(areas.begin(), areas.begin() + areas.size() / 2, areas.end());
      med_area = areas[areas.size() / 2];
    }
    for (int i : isolated) {
      cloud.points[i].area = med_area;
      warn("estimate_area_weights: isolated point " + std::to_string(i) +
           ", using median area");
    }
  }
}

}  // namespace dipole
