#pragma once

#include "dipole/fields.hpp"
#include "dipole/image.hpp"

namespace dipole {

struct Camera {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();  // world-from-camera; camera looks along +z
  double fx = 0, fy = 0;                // focal lengths in pixels
  double cx = 0, cy = 0;                // principal point in pixels
  int width = 0, height = 0;

  void validate() const;

  // Convenience pose: camera at `position` looking at `target`.
  static Camera look_at(const Vec3& position, const Vec3& target, const Vec3& up, double fov_deg,
                        int width, int height);
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit length
};

// Ray through pixel coordinates (px, py); (0.5, 0.5) offsets hit pixel
// centers. Projection is the exact inverse (used by the reprojection test).
Ray generate_ray(const Camera& camera, double px, double py);
// Returns (px, py); throws NumericalError for points behind the camera.
Eigen::Vector2d project(const Camera& camera, const Vec3& point);

struct RenderConfig {
  double t_near = 0.05, t_far = 6.0;
  // probe pass resolution and the (sparse, dense, sparse) schedule around the
  // first sign change of f; uniform fallback when the ray misses everything
  int probe_count = 1024;
  int sparse_before = 24, dense_at = 48, sparse_after = 8;
  int uniform_count = 80;
  int shadow_samples = 64;
};

struct RaySamples {
  std::vector<double> t;      // strictly ascending in [t_near, t_far]
  std::vector<double> delta;  // delta[j] = t[j] - t[j-1], delta[0] = t[0] - t_near
  bool bracketed = false;     // probe pass found a sign change
};

RaySamples sample_ray(const SceneModel& model, const Ray& ray, const RenderConfig& config);

struct Light {
  Vec3 position = Vec3::Zero();
  Vec3 intensity = Vec3::Ones();
};

// Everything the backward pass needs, recorded during the forward render.
struct RayTape {
  Ray ray;
  RaySamples samples;
  struct Sample {
    Vec3 x;
    double f = 0;
    Vec3 grad_f = Vec3::Zero();
    double s = 0;          // omega . grad f, signed
    double sigma = 0;
    double trans = 0;      // transmittance before this sample
    double p = 0;          // free-flight weight
    std::vector<double> appearance;
    RadianceHead::Eval head;
    Vec3 radiance = Vec3::Zero();  // head rgb plus any direct illumination
    Vec3 direct = Vec3::Zero();    // detached direct-illumination factor per light sum
  };
  std::vector<Sample> at;
};

struct RayResult {
  Vec3 rgb = Vec3::Zero();
  std::vector<double> weights;  // p_j, sum <= 1
  double entropy = 0.0;
};

// Eq. of sight: I = sum_j T_j (1 - e^{-sigma_j delta_j}) r_j, radiance
// queried against the reversed view direction. `lights` non-empty enables
// the shadow-ray direct-illumination term (transmittance is treated as a
// constant in the backward pass).
RayResult render_ray(const SceneModel& model, const Ray& ray, const RaySamples& samples,
                     std::span<const Light> lights = {}, RayTape* tape = nullptr,
                     int shadow_samples = 64);

// H = -sum p log p with 0 log 0 = 0.
double ray_entropy(std::span<const double> weights);

// Gradient sinks of one backpropagated ray, besides the tree buffer.
struct RenderGrads {
  std::vector<double> d_head_w;
  Vec3 d_background = Vec3::Zero();
  double d_lambda = 0.0;
  void resize_for(const RadianceHead& head) { d_head_w.assign(head.mlp.w.size(), 0.0); }
};

// Backward of render_ray: d_rgb is the loss derivative of the ray color and
// d_weight[j] of the free-flight weights (entropy). Emits adjoint queries
// into `buf` (moments, normals, epsilon) and accumulates the rest in `grads`.
void render_ray_backward(const SceneModel& model, const RayTape& tape, const Vec3& d_rgb,
                         std::span<const double> d_weight, GradientBuffer& buf,
                         RenderGrads& grads);

double transmittance(const SceneModel& model, const Vec3& x, const Vec3& y, int samples);

// Unshadowed-then-attenuated point-light term: sum over lights of
// albedo * intensity * T(x, light) * max(0, n_hat . (l - x)) / |l - x|^3.
Vec3 direct_illumination(const SceneModel& model, const Vec3& x, const Vec3& albedo,
                         const Vec3& n_hat, std::span<const Light> lights, int shadow_samples);

Image render_image(const SceneModel& model, const Camera& camera, const RenderConfig& config,
                   std::span<const Light> lights = {}, int workers = 0);

}  // namespace dipole
