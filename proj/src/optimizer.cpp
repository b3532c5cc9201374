#include "dipole/optimizer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace dipole {

void LossWeights::validate() const {
  if (w_render < 0 || w_entropy < 0 || w_winding < 0 || w_normal < 0)
    throw DataError("LossWeights: weights must be nonnegative");
}

void TrainConfig::validate() const {
  if (batch_rays <= 0) throw DataError("TrainConfig: batch_rays must be positive");
  if (lr_points < 0 || lr_head < 0 || lr_scalars < 0)
    throw DataError("TrainConfig: learning rates must be nonnegative");
  if (total_iters < 0) throw DataError("TrainConfig: total_iters must be nonnegative");
  if (warmup_iters < 0) throw DataError("TrainConfig: warmup_iters must be nonnegative");
  if (total_iters > 0 && warmup_iters >= total_iters)
    throw DataError("TrainConfig: warmup_iters must lie in [0, total_iters)");
  if (grow_rays < 0) throw DataError("TrainConfig: grow_rays must be nonnegative");
  weights.validate();
}

double lr_schedule(int iter, const TrainConfig& config) {
  config.validate();
  if (iter <= 0) return config.warmup_iters > 0 ? 0.0 : 1.0;
  if (iter < config.warmup_iters) return static_cast<double>(iter) / config.warmup_iters;
  if (iter >= config.total_iters) return 0.0;
  double u = static_cast<double>(iter - config.warmup_iters) /
             (config.total_iters - config.warmup_iters);
  return 0.5 * (1.0 + std::cos(kPi * u));
}

LossBreakdown compute_losses(const SceneModel& model, std::span<const RayResult> rendered,
                             std::span<const Vec3> gt_colors, const LossWeights& weights) {
  if (rendered.size() != gt_colors.size())
    throw DataError("compute_losses: batch size mismatch");
  weights.validate();
  LossBreakdown loss;
  if (!rendered.empty()) {
    KahanSum l1, ent;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      Vec3 d = rendered[i].rgb - gt_colors[i];
      l1.add((std::fabs(d.x()) + std::fabs(d.y()) + std::fabs(d.z())) / 3.0);
      ent.add(rendered[i].entropy);
    }
    loss.render = weights.w_render * l1.value() / rendered.size();
    loss.entropy = weights.w_entropy * ent.value() / rendered.size();
  }
  KahanSum wind, norm;
  for (std::size_t m = 0; m < model.cloud.size(); ++m) {
    const OrientedPoint& p = model.cloud.points[m];
    double db = p.geometry_moment - 1.0;
    wind.add(db * db);
    norm.add((p.normal - model.cloud.initial_normals[m]).squaredNorm());
  }
  loss.winding = weights.w_winding * wind.value();
  loss.normal = weights.w_normal * norm.value();
  return loss;
}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw DataError("Adam::step: size mismatch");
  // parameter groups only ever grow (point growing appends); fresh slots
  // start with zero moments
  if (m.size() < params.size()) {
    m.resize(params.size(), 0.0);
    v.resize(params.size(), 0.0);
  }
  ++t;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

Trainer::Trainer(SceneModel& model, std::vector<TrainView> views, std::vector<Light> lights,
                 TrainConfig config)
    : model_(model), views_(std::move(views)), lights_(std::move(lights)),
      config_(std::move(config)), rng_(config_.rng_seed) {
  config_.validate();
  if (views_.empty()) throw DataError("Trainer: no views");
  for (const TrainView& v : views_) {
    v.camera.validate();
    if (v.image.width != v.camera.width || v.image.height != v.camera.height)
      throw DataError("Trainer: view image and camera resolution disagree");
  }
  if (model_.cloud.initial_normals.size() != model_.cloud.size())
    throw DataError("Trainer: model not prepared");
}

StepMetrics Trainer::step() {
  StepMetrics met;
  met.iter = iter_;
  met.lr_multiplier = lr_schedule(iter_, config_);
  model_.refresh_moments();

  const int B = config_.batch_rays;
  const std::size_t M = model_.cloud.size();
  const int K = model_.cloud.k_appearance;
  std::uniform_int_distribution<int> pick_view(0, static_cast<int>(views_.size()) - 1);
  std::vector<RayTape> tapes(B);
  std::vector<RayResult> results(B);
  std::vector<Vec3> gt(B);
  std::span<const Light> lights =
      config_.shadow_rays ? std::span<const Light>(lights_) : std::span<const Light>();
  for (int b = 0; b < B; ++b) {
    int vi = pick_view(rng_);
    const TrainView& view = views_[vi];
    int px = std::uniform_int_distribution<int>(0, view.camera.width - 1)(rng_);
    int py = std::uniform_int_distribution<int>(0, view.camera.height - 1)(rng_);
    Ray ray = generate_ray(view.camera, px + 0.5, py + 0.5);
    RaySamples samples = sample_ray(model_, ray, config_.render);
    results[b] = render_ray(model_, ray, samples, lights, &tapes[b],
                            config_.render.shadow_samples);
    gt[b] = view.image.at(px, py);
  }
  met.loss = compute_losses(model_, results, gt, config_.weights);
  if (!std::isfinite(met.loss.total())) {
    met.rejected = true;
    ++iter_;
    return met;
  }

  GradientBuffer buf = model_.tree.make_buffer();
  RenderGrads rg;
  rg.resize_for(model_.head);
  const double render_scale = config_.weights.w_render / (3.0 * B);
  const double entropy_scale = config_.weights.w_entropy / B;
  std::vector<double> d_weight;
  for (int b = 0; b < B; ++b) {
    Vec3 d_rgb;
    for (int c = 0; c < 3; ++c) {
      double d = results[b].rgb[c] - gt[b][c];
      d_rgb[c] = render_scale * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
    d_weight.assign(results[b].weights.size(), 0.0);
    for (std::size_t j = 0; j < d_weight.size(); ++j) {
      double p = results[b].weights[j];
      if (p > 0) d_weight[j] = -entropy_scale * (std::log(p) + 1.0);
    }
    render_ray_backward(model_, tapes[b], d_rgb, d_weight, buf, rg);
  }
  PointGradients pg = model_.tree.flush_gradients(buf);
  for (std::size_t m = 0; m < M; ++m) {
    pg.moment(m, 0) += 2.0 * config_.weights.w_winding *
                       (model_.cloud.points[m].geometry_moment - 1.0);
    pg.normals[m] += 2.0 * config_.weights.w_normal *
                     (model_.cloud.points[m].normal - model_.cloud.initial_normals[m]);
  }

  // parameter groups: geometry moments, appearance moments and normals at the
  // point rate; head weights and background at the head rate; lambda and
  // epsilon in log space so positivity is structural
  double lr_p = config_.lr_points * met.lr_multiplier;
  double lr_h = config_.lr_head * met.lr_multiplier;
  std::vector<double> beta(M), g_beta(M);
  std::vector<double> alpha(M * K), g_alpha(M * K);
  std::vector<double> nraw(3 * M), g_nraw(3 * M);
  for (std::size_t m = 0; m < M; ++m) {
    const OrientedPoint& p = model_.cloud.points[m];
    beta[m] = p.geometry_moment;
    g_beta[m] = pg.moment(m, 0);
    for (int k = 0; k < K; ++k) {
      alpha[m * K + k] = p.appearance_moments[k];
      g_alpha[m * K + k] = pg.moment(m, 1 + k);
    }
    for (int c = 0; c < 3; ++c) {
      nraw[3 * m + c] = p.normal[c];
      g_nraw[3 * m + c] = pg.normals[m][c];
    }
  }
  adam_beta_.step(beta, g_beta, lr_p);
  adam_alpha_.step(alpha, g_alpha, lr_p);
  adam_normal_.step(nraw, g_nraw, lr_p);
  adam_head_.step(model_.head.mlp.w, rg.d_head_w, lr_h);
  double scalars[2] = {std::log(model_.lambda_scale), std::log(model_.kernel.epsilon)};
  double old_scalars[2] = {scalars[0], scalars[1]};
  double g_scalars[2] = {model_.lambda_scale * rg.d_lambda,
                         model_.kernel.epsilon * pg.d_epsilon};
  adam_scalars_.step(scalars, g_scalars, config_.lr_scalars * met.lr_multiplier);
  double bg[3] = {model_.background[0], model_.background[1], model_.background[2]};
  double g_bg[3] = {rg.d_background[0], rg.d_background[1], rg.d_background[2]};
  adam_background_.step(bg, g_bg, lr_h);

  for (std::size_t m = 0; m < M; ++m) {
    OrientedPoint& p = model_.cloud.points[m];
    p.geometry_moment = beta[m];
    for (int k = 0; k < K; ++k) p.appearance_moments[k] = alpha[m * K + k];
    Vec3 n(nraw[3 * m], nraw[3 * m + 1], nraw[3 * m + 2]);
    if (n != p.normal) {
      double len = n.norm();
      p.normal = len > 1e-12 ? Vec3(n / len) : p.normal;
    }
  }
  // only re-exponentiate on an actual change so a zero step stays bit-exact
  if (scalars[0] != old_scalars[0]) model_.lambda_scale = std::exp(scalars[0]);
  if (scalars[1] != old_scalars[1]) model_.kernel.epsilon = std::exp(scalars[1]);
  model_.background = Vec3(bg[0], bg[1], bg[2]);

  ++iter_;
  if (config_.grow_every > 0 && iter_ % config_.grow_every == 0) met.grown_points = grow_points();
  return met;
}

int Trainer::grow_points() { return point_growing(model_, config_, views_, rng_); }

void Trainer::append_metrics_csv(const std::string& path, const StepMetrics& metrics) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("append_metrics_csv: cannot open " + path);
  if (fresh) out << "iter,loss,render,entropy,winding,normal,lr,grown,rejected\n";
  out.precision(9);
  out << metrics.iter << ',' << metrics.loss.total() << ',' << metrics.loss.render << ','
      << metrics.loss.entropy << ',' << metrics.loss.winding << ',' << metrics.loss.normal << ','
      << metrics.lr_multiplier << ',' << metrics.grown_points << ','
      << (metrics.rejected ? 1 : 0) << '\n';
}

int point_growing(SceneModel& model, const TrainConfig& config, std::span<const TrainView> views,
                  Rng& rng) {
  if (views.empty() || model.cloud.empty() || config.grow_rays <= 0) return 0;
  const std::size_t m0 = model.cloud.size();
  const int cap = static_cast<int>((m0 + 9) / 10);
  double threshold = config.grow_distance_threshold > 0 ? config.grow_distance_threshold
                                                        : 2.0 * model.cloud.mean_knn_spacing();
  KdTree existing(model.cloud.positions());
  std::uniform_int_distribution<int> pick_view(0, static_cast<int>(views.size()) - 1);
  std::vector<Vec3> accepted;
  for (int r = 0; r < config.grow_rays && static_cast<int>(accepted.size()) < cap; ++r) {
    const TrainView& view = views[pick_view(rng)];
    int px = std::uniform_int_distribution<int>(0, view.camera.width - 1)(rng);
    int py = std::uniform_int_distribution<int>(0, view.camera.height - 1)(rng);
    Ray ray = generate_ray(view.camera, px + 0.5, py + 0.5);
    RaySamples samples = sample_ray(model, ray, config.render);
    if (!samples.bracketed) continue;
    // first outside-to-inside crossing along the dense schedule, located by
    // linear interpolation of f
    double prev_t = 0, prev_f = 0;
    bool have_prev = false, hit = false;
    Vec3 x_star = Vec3::Zero();
    for (double t : samples.t) {
      double f = geometry_field(model, ray.origin + t * ray.dir);
      if (have_prev && prev_f > 0 && f <= 0) {
        double w = prev_f / (prev_f - f);
        double ts = prev_t + w * (t - prev_t);
        x_star = ray.origin + ts * ray.dir;
        hit = true;
        break;
      }
      prev_t = t;
      prev_f = f;
      have_prev = true;
    }
    if (!hit) continue;
    double dist = existing.nearest_distance(x_star);
    for (const Vec3& a : accepted) dist = std::min(dist, (a - x_star).norm());
    if (dist > threshold) accepted.push_back(x_star);
  }
  if (accepted.empty()) return 0;

  const int K = model.cloud.k_appearance;
  const int k_nb = std::min<int>(8, static_cast<int>(m0));
  for (const Vec3& x : accepted) {
    OrientedPoint p;
    p.position = x;
    p.normal = pca_normal_at(model.cloud, existing, x, k_nb).normal;
    std::vector<int> nb = knn(model.cloud, x, k_nb);
    p.appearance_moments.assign(K, 0.0);
    double beta_sum = 0;
    for (int i : nb) {
      beta_sum += model.cloud.points[i].geometry_moment;
      for (int k = 0; k < K; ++k)
        p.appearance_moments[k] += model.cloud.points[i].appearance_moments[k];
    }
    p.geometry_moment = beta_sum / nb.size();
    for (int k = 0; k < K; ++k) p.appearance_moments[k] /= nb.size();
    model.cloud.points.push_back(std::move(p));
    model.cloud.initial_normals.push_back(model.cloud.points.back().normal);
  }
  estimate_area_weights(model.cloud, 8);
  model.prepare();
  return static_cast<int>(accepted.size());
}

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("load_checkpoint: truncated file");
  return v;
}

void put_vec3(std::ostream& out, const Vec3& v) {
  for (int c = 0; c < 3; ++c) put(out, v[c]);
}

Vec3 get_vec3(std::istream& in) {
  Vec3 v;
  for (int c = 0; c < 3; ++c) v[c] = get<double>(in);
  return v;
}

}  // namespace

void save_checkpoint(const SceneModel& model, int iter, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 4);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::int32_t>(iter));
  put(out, static_cast<std::int32_t>(model.cloud.k_appearance));
  put(out, static_cast<std::uint64_t>(model.cloud.size()));
  for (const OrientedPoint& p : model.cloud.points) {
    put_vec3(out, p.position);
    put_vec3(out, p.normal);
    put(out, p.area);
    put(out, p.geometry_moment);
    for (double a : p.appearance_moments) put(out, a);
  }
  for (const Vec3& n : model.cloud.initial_normals) put_vec3(out, n);
  put(out, static_cast<std::uint8_t>(model.head.variant));
  put(out, static_cast<std::uint8_t>(model.head.with_albedo ? 1 : 0));
  put(out, static_cast<std::uint32_t>(model.head.mlp.sizes.size()));
  for (int s : model.head.mlp.sizes) put(out, static_cast<std::int32_t>(s));
  put(out, static_cast<std::uint64_t>(model.head.mlp.w.size()));
  for (double w : model.head.mlp.w) put(out, w);
  put(out, model.lambda_scale);
  put(out, model.kernel.epsilon);
  put_vec3(out, model.background);
  put(out, model.beta_bh);
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("load_checkpoint: bad magic in " + path);
  if (get<std::uint32_t>(in) != kCheckpointVersion)
    throw DataError("load_checkpoint: unsupported version in " + path);
  Checkpoint ck;
  ck.iter = get<std::int32_t>(in);
  SceneModel& model = ck.model;
  model.cloud.k_appearance = get<std::int32_t>(in);
  std::uint64_t M = get<std::uint64_t>(in);
  model.cloud.points.resize(M);
  for (OrientedPoint& p : model.cloud.points) {
    p.position = get_vec3(in);
    p.normal = get_vec3(in);
    p.area = get<double>(in);
    p.geometry_moment = get<double>(in);
    p.appearance_moments.resize(model.cloud.k_appearance);
    for (double& a : p.appearance_moments) a = get<double>(in);
  }
  model.cloud.initial_normals.resize(M);
  for (Vec3& n : model.cloud.initial_normals) n = get_vec3(in);
  model.head.variant = static_cast<HeadVariant>(get<std::uint8_t>(in));
  model.head.with_albedo = get<std::uint8_t>(in) != 0;
  model.head.mlp.sizes.resize(get<std::uint32_t>(in));
  for (int& s : model.head.mlp.sizes) s = get<std::int32_t>(in);
  model.head.mlp.w.resize(get<std::uint64_t>(in));
  for (double& w : model.head.mlp.w) w = get<double>(in);
  model.lambda_scale = get<double>(in);
  model.kernel.epsilon = get<double>(in);
  model.background = get_vec3(in);
  model.beta_bh = get<double>(in);
  model.prepare();
  return ck;
}

}  // namespace dipole
