#pragma once

#include "dipole/bhtree.hpp"
#include "dipole/radiance.hpp"

namespace dipole {

// The full differentiable scene: oriented points with moments, the
// acceleration tree over them, kernel width, the vacancy scale and the
// radiance head. Channel 0 of the tree is the geometry moment (dipole
// kernel); channels 1..K are appearance (radial kernel, foreshortening
// skipped).
struct SceneModel {
  OrientedPointCloud cloud;
  DipoleTree tree;
  KernelParams kernel;
  double lambda_scale = 20.0;
  double beta_bh = 2.0;
  RadianceHead head;
  Vec3 background = Vec3::Zero();

  // Builds the tree, assigns channel kernels and snapshots initial normals
  // if absent. epsilon <= 0 picks 1.5x the mean kNN spacing.
  void prepare();
  void refresh_moments() { tree.update_moments(cloud); }
};

// Unit-moment dipole sum sum_m a_m P_eps(x, p_m): approximately 1 deep
// inside a closed cloud, 1/2 on it, 0 far outside. Exact O(M) summation;
// this is a diagnostic, the render path goes through the tree's geometry
// channel (identical when all geometry moments are 1).
double winding_number(const SceneModel& model, const Vec3& x);

// f(x) = 1/2 - geometry-channel dipole sum: negative inside, positive
// outside, zero on the implicit surface.
double geometry_field(const SceneModel& model, const Vec3& x);

// f and its spatial gradient in one traversal.
struct FieldSample {
  double f = 0.0;
  Vec3 grad_f = Vec3::Zero();
};
FieldSample geometry_field_with_gradient(const SceneModel& model, const Vec3& x);

// v = Phi(lambda f) in (0,1); 1/2 on the implicit surface.
double vacancy_of_f(const SceneModel& model, double f);
double vacancy(const SceneModel& model, const Vec3& x);

// sigma(x, omega) = |omega . grad v| / v, the directional density of ray
// termination. Nonnegative; even in omega.
double attenuation(const SceneModel& model, const Vec3& x, const Vec3& omega);

// grad f / |grad f|. Throws NumericalError when |grad f| <= 1e-12.
Vec3 implicit_normal(const SceneModel& model, const Vec3& x);

}  // namespace dipole
