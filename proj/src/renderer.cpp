#include "dipole/renderer.hpp"

#include <cmath>

namespace dipole {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw DataError("Camera: resolution must be positive");
  if (fx <= 0 || fy <= 0) throw DataError("Camera: focal lengths must be positive");
  Mat3 should_be_identity = orientation * orientation.transpose();
  if ((should_be_identity - Mat3::Identity()).norm() > 1e-6 ||
      std::fabs(orientation.determinant() - 1.0) > 1e-6)
    throw DataError("Camera: orientation must be a rotation");
}

Camera Camera::look_at(const Vec3& position, const Vec3& target, const Vec3& up, double fov_deg,
                       int width, int height) {
  Camera cam;
  cam.position = position;
  Vec3 z = (target - position).normalized();
  Vec3 x = z.cross(up).normalized();
  Vec3 y = z.cross(x);
  cam.orientation.col(0) = x;
  cam.orientation.col(1) = y;
  cam.orientation.col(2) = z;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov_deg * kPi / 180.0);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.validate();
  return cam;
}

Ray generate_ray(const Camera& camera, double px, double py) {
  Vec3 dir_cam((px - camera.cx) / camera.fx, (py - camera.cy) / camera.fy, 1.0);
  return {camera.position, (camera.orientation * dir_cam).normalized()};
}

Eigen::Vector2d project(const Camera& camera, const Vec3& point) {
  Vec3 q = camera.orientation.transpose() * (point - camera.position);
  if (q.z() <= 1e-12) throw NumericalError("project: point behind the camera");
  return {camera.cx + camera.fx * q.x() / q.z(), camera.cy + camera.fy * q.y() / q.z()};
}

RaySamples sample_ray(const SceneModel& model, const Ray& ray, const RenderConfig& config) {
  if (config.t_near >= config.t_far) throw DataError("sample_ray: t_near must precede t_far");
  RaySamples s;
  double span = config.t_far - config.t_near;
  if (span < 1e-9) {
    s.t = {0.5 * (config.t_near + config.t_far)};
    s.delta = {s.t[0] - config.t_near};
    return s;
  }
  // probe pass: value-only geometry queries on a uniform grid
  int n = std::max(2, config.probe_count);
  double prev_f = 0, prev_t = 0;
  double bracket_lo = 0, bracket_hi = 0;
  for (int i = 0; i < n; ++i) {
    double t = config.t_near + span * i / (n - 1);
    double f =
        0.5 - model.tree.primal_channel(ray.origin + t * ray.dir, model.kernel, model.beta_bh, 0);
    if (i > 0 && ((prev_f > 0 && f <= 0) || (prev_f <= 0 && f > 0))) {
      s.bracketed = true;
      bracket_lo = prev_t;
      bracket_hi = t;
      break;
    }
    prev_f = f;
    prev_t = t;
  }
  auto emit = [&](double lo, double hi, int count) {
    for (int i = 0; i < count; ++i) s.t.push_back(lo + (hi - lo) * (i + 0.5) / count);
  };
  if (!s.bracketed) {
    emit(config.t_near, config.t_far, std::max(1, config.uniform_count));
  } else {
    emit(config.t_near, bracket_lo, config.sparse_before);
    emit(bracket_lo, bracket_hi, std::max(1, config.dense_at));
    emit(bracket_hi, config.t_far, config.sparse_after);
  }
  s.delta.resize(s.t.size());
  for (std::size_t j = 0; j < s.t.size(); ++j)
    s.delta[j] = s.t[j] - (j == 0 ? config.t_near : s.t[j - 1]);
  return s;
}

double ray_entropy(std::span<const double> weights) {
  KahanSum h;
  for (double p : weights) {
    if (p < 0) throw DataError("ray_entropy: negative weight");
    if (p > 0) h.add(-p * std::log(p));
  }
  return h.value();
}

namespace {

// sigma = lambda h(u) |s| with u = lambda f, s = omega . grad f
double sigma_of(const SceneModel& model, double f, double s) {
  return model.lambda_scale * normal_hazard(model.lambda_scale * f) * std::fabs(s);
}

}  // namespace

RayResult render_ray(const SceneModel& model, const Ray& ray, const RaySamples& samples,
                     std::span<const Light> lights, RayTape* tape, int shadow_samples) {
  RayResult res;
  const int C = model.tree.channels();
  const Vec3 omega_view = ray.dir;
  const Vec3 omega_head = -ray.dir;  // radiance queried against the view direction
  std::vector<double> out(C);
  std::vector<Vec3> grad(C);
  if (tape) {
    tape->ray = ray;
    tape->samples = samples;
    tape->at.clear();
    tape->at.reserve(samples.t.size());
  }
  double trans = 1.0;
  Vec3 rgb = Vec3::Zero();
  res.weights.reserve(samples.t.size());
  for (std::size_t j = 0; j < samples.t.size(); ++j) {
    Vec3 x = ray.origin + samples.t[j] * ray.dir;
    model.tree.primal_with_gradient(x, model.kernel, model.beta_bh, out, grad);
    double f = 0.5 - out[0];
    Vec3 grad_f = -grad[0];
    double s = omega_view.dot(grad_f);
    double sigma = sigma_of(model, f, s);
    double gn = grad_f.norm();
    Vec3 n_hat = gn > 1e-12 ? Vec3(grad_f / gn) : omega_head;
    std::vector<double> appearance(out.begin() + 1, out.end());
    RadianceHead::Eval head = model.head.eval(x, omega_head, n_hat, appearance);
    Vec3 direct = Vec3::Zero();
    Vec3 radiance = head.rgb;
    if (!lights.empty() && model.head.with_albedo) {
      for (const Light& l : lights) {
        Vec3 to_light = l.position - x;
        double r = to_light.norm();
        double cosine = n_hat.dot(to_light);
        if (cosine <= 0 || r <= 1e-12) continue;
        double T = transmittance(model, x, l.position, shadow_samples);
        direct += l.intensity * T * cosine / (r * r * r);
      }
      radiance += head.albedo.cwiseProduct(direct);
    }
    double E = std::exp(-sigma * samples.delta[j]);
    double p = trans * (1.0 - E);
    rgb += p * radiance;
    res.weights.push_back(p);
    if (tape) {
      RayTape::Sample rec;
      rec.x = x;
      rec.f = f;
      rec.grad_f = grad_f;
      rec.s = s;
      rec.sigma = sigma;
      rec.trans = trans;
      rec.p = p;
      rec.appearance = std::move(appearance);
      rec.head = std::move(head);
      rec.radiance = radiance;
      rec.direct = direct;
      tape->at.push_back(std::move(rec));
    }
    trans *= E;
  }
  res.rgb = rgb + trans * model.background;
  res.entropy = ray_entropy(res.weights);
  return res;
}

void render_ray_backward(const SceneModel& model, const RayTape& tape, const Vec3& d_rgb,
                         std::span<const double> d_weight, GradientBuffer& buf,
                         RenderGrads& grads) {
  const std::size_t J = tape.at.size();
  if (!d_weight.empty() && d_weight.size() != J)
    throw DataError("render_ray_backward: weight adjoint size mismatch");
  const int C = model.tree.channels();
  const Vec3 omega_view = tape.ray.dir;
  // dL/dp_j, with the background folded in through the leftover weight
  std::vector<double> dp(J);
  double sum_p = 0;
  for (std::size_t j = 0; j < J; ++j) {
    dp[j] = d_rgb.dot(tape.at[j].radiance - model.background);
    if (!d_weight.empty()) dp[j] += d_weight[j];
    sum_p += tape.at[j].p;
  }
  grads.d_background += (1.0 - sum_p) * d_rgb;
  // suffix sums give dL/dsigma_j in one backward sweep
  double suffix = 0;  // sum over k > j of p_k dp_k
  std::vector<double> d_out(C), d_sigma(J);
  std::vector<Vec3> d_grad(C);
  for (std::size_t j = J; j-- > 0;) {
    const auto& a = tape.at[j];
    double E = a.trans > 0 ? 1.0 - a.p / a.trans : 0.0;
    d_sigma[j] = tape.samples.delta[j] * (a.trans * E * dp[j] - suffix);
    suffix += a.p * dp[j];
  }
  for (std::size_t j = 0; j < J; ++j) {
    const auto& a = tape.at[j];
    Vec3 d_radiance = a.p * d_rgb;
    // radiance head: weights, appearance channels, implicit normal
    Vec3 d_albedo = model.head.with_albedo ? Vec3(d_radiance.cwiseProduct(a.direct)) : Vec3::Zero();
    auto in_grads = model.head.backward(a.head, d_radiance, d_albedo, grads.d_head_w);
    Vec3 d_grad_f = Vec3::Zero();
    double gn = a.grad_f.norm();
    if (gn > 1e-12) {
      Vec3 n_hat = a.grad_f / gn;
      d_grad_f += (in_grads.d_normal - n_hat * n_hat.dot(in_grads.d_normal)) / gn;
    }
    // sigma = lambda h(u) |s|, u = lambda f
    double lambda = model.lambda_scale;
    double u = lambda * a.f;
    double haz = normal_hazard(u);
    double dhaz = -u * haz - haz * haz;  // h'(u)
    double abs_s = std::fabs(a.s);
    double sgn_s = a.s > 0 ? 1.0 : (a.s < 0 ? -1.0 : 0.0);
    double d_f = d_sigma[j] * lambda * lambda * abs_s * dhaz;
    grads.d_lambda += d_sigma[j] * (haz * abs_s + lambda * abs_s * dhaz * a.f);
    d_grad_f += d_sigma[j] * lambda * haz * sgn_s * omega_view;
    // emit the tree adjoint: f = 1/2 - D, grad f = -grad D
    d_out[0] = -d_f;
    d_grad[0] = -d_grad_f;
    for (int k = 0; k + 1 < C; ++k) {
      d_out[1 + k] = in_grads.d_appearance[k];
      d_grad[1 + k] = Vec3::Zero();
    }
    model.tree.adjoint(a.x, model.kernel, model.beta_bh, d_out, d_grad, buf);
  }
}

double transmittance(const SceneModel& model, const Vec3& x, const Vec3& y, int samples) {
  Vec3 d = y - x;
  double len = d.norm();
  if (len == 0.0) throw DataError("transmittance: coincident endpoints");
  Vec3 dir = d / len;
  int n = std::max(1, samples);
  double delta = len / n;
  KahanSum tau_sum;
  for (int i = 0; i < n; ++i)
    tau_sum.add(attenuation(model, x + (i + 0.5) * delta * dir, dir) * delta);
  return std::exp(-tau_sum.value());
}

Vec3 direct_illumination(const SceneModel& model, const Vec3& x, const Vec3& albedo,
                         const Vec3& n_hat, std::span<const Light> lights, int shadow_samples) {
  Vec3 out = Vec3::Zero();
  for (const Light& l : lights) {
    Vec3 to_light = l.position - x;
    double r = to_light.norm();
    double cosine = n_hat.dot(to_light);
    if (cosine <= 0 || r <= 1e-12) continue;  // light below the surface
    double T = transmittance(model, x, l.position, shadow_samples);
    out += albedo.cwiseProduct(l.intensity) * T * cosine / (r * r * r);
  }
  return out;
}

Image render_image(const SceneModel& model, const Camera& camera, const RenderConfig& config,
                   std::span<const Light> lights, int workers) {
  camera.validate();
  Image image(camera.width, camera.height);
  parallel_for(
      camera.height,
      [&](std::int64_t y0, std::int64_t y1, int) {
        for (std::int64_t y = y0; y < y1; ++y)
          for (int x = 0; x < camera.width; ++x) {
            Ray ray = generate_ray(camera, x + 0.5, static_cast<double>(y) + 0.5);
            RaySamples samples = sample_ray(model, ray, config);
            image.at(x, static_cast<int>(y)) =
                render_ray(model, ray, samples, lights, nullptr, config.shadow_samples).rgb;
          }
      },
      workers);
  return image;
}

}  // namespace dipole
