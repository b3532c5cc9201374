#include "dipole/fields.hpp"

#include <cmath>

namespace dipole {

void SceneModel::prepare() {
  if (cloud.empty()) throw DataError("SceneModel::prepare: empty point cloud");
  if (lambda_scale <= 0) throw DataError("SceneModel::prepare: lambda_scale must be positive");
  if (kernel.epsilon <= 0 && !kernel.desingularized)
    kernel.epsilon = 1.5 * cloud.mean_knn_spacing();
  if (cloud.initial_normals.empty()) cloud.snapshot_initial_normals();
  head.k_appearance = cloud.k_appearance;
  tree.build(cloud);
  std::vector<ChannelKernel> kinds(1 + cloud.k_appearance, ChannelKernel::Radial);
  kinds[0] = ChannelKernel::Dipole;
  tree.set_channel_kernels(std::move(kinds));
}

double winding_number(const SceneModel& model, const Vec3& x) {
  KahanSum sum;
  for (const OrientedPoint& p : model.cloud.points)
    sum.add(p.area * regularized_poisson(x, p.position, p.normal, model.kernel));
  return sum.value();
}

double geometry_field(const SceneModel& model, const Vec3& x) {
  return 0.5 - model.tree.primal_channel(x, model.kernel, model.beta_bh, 0);
}

FieldSample geometry_field_with_gradient(const SceneModel& model, const Vec3& x) {
  int C = model.tree.channels();
  std::vector<double> out(C);
  std::vector<Vec3> grad(C);
  model.tree.primal_with_gradient(x, model.kernel, model.beta_bh, out, grad);
  return {0.5 - out[0], -grad[0]};
}

double vacancy_of_f(const SceneModel& model, double f) {
  return normal_cdf(model.lambda_scale * f);
}

double vacancy(const SceneModel& model, const Vec3& x) {
  return vacancy_of_f(model, geometry_field(model, x));
}

double attenuation(const SceneModel& model, const Vec3& x, const Vec3& omega) {
  FieldSample s = geometry_field_with_gradient(model, x);
  double u = model.lambda_scale * s.f;
  // |grad v| / v = lambda (phi(u)/Phi(u)) |omega . grad f|; the hazard form
  // stays finite deep inside where phi and Phi both underflow
  return model.lambda_scale * normal_hazard(u) * std::fabs(omega.dot(s.grad_f));
}

Vec3 implicit_normal(const SceneModel& model, const Vec3& x) {
  FieldSample s = geometry_field_with_gradient(model, x);
  double n = s.grad_f.norm();
  if (n <= 1e-12) throw NumericalError("implicit_normal: vanishing field gradient");
  return s.grad_f / n;
}

}  // namespace dipole
