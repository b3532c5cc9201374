#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dipole/optimizer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dipole;
using namespace dipole::testing;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

RenderConfig cheap_render() {
  RenderConfig rc;
  rc.t_near = 0.5;
  rc.t_far = 6.0;
  rc.probe_count = 64;
  rc.sparse_before = 6;
  rc.dense_at = 12;
  rc.sparse_after = 4;
  rc.uniform_count = 12;
  rc.shadow_samples = 8;
  return rc;
}

SceneModel sphere_model(int m, int k_appearance, double epsilon = 0.1) {
  SceneModel model;
  model.cloud = sphere_cloud(m, 1.0, k_appearance);
  model.kernel.epsilon = epsilon;
  model.prepare();
  return model;
}

std::vector<TrainView> two_views(const SceneModel& model, int w, int h,
                                 const RenderConfig& rc) {
  std::vector<TrainView> views;
  for (double side : {-3.0, 3.0}) {
    TrainView v;
    v.camera = Camera::look_at(Vec3(0.3, 0.2, side), Vec3::Zero(), Vec3::UnitY(), 40.0, w, h);
    v.image = render_image(model, v.camera, rc);
    views.push_back(std::move(v));
  }
  return views;
}

bool models_identical(const SceneModel& a, const SceneModel& b) {
  if (a.cloud.size() != b.cloud.size()) return false;
  for (std::size_t m = 0; m < a.cloud.size(); ++m) {
    const auto& pa = a.cloud.points[m];
    const auto& pb = b.cloud.points[m];
    if (pa.geometry_moment != pb.geometry_moment) return false;
    if (pa.normal != pb.normal) return false;
    if (pa.appearance_moments != pb.appearance_moments) return false;
  }
  return a.lambda_scale == b.lambda_scale && a.kernel.epsilon == b.kernel.epsilon &&
         a.background == b.background && a.head.mlp.w == b.head.mlp.w;
}

}  // namespace

TEST_CASE("lr schedule: linear warmup then cosine decay") {
  TrainConfig c;
  c.warmup_iters = 200;
  c.total_iters = 1000;
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(100, c) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lr_schedule(200, c) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lr_schedule(600, c) == doctest::Approx(0.5).epsilon(1e-12));  // cosine midpoint
  CHECK(lr_schedule(1000, c) == 0.0);
  CHECK(lr_schedule(5000, c) == 0.0);
  c.warmup_iters = 0;
  CHECK(lr_schedule(0, c) == 1.0);
  c.warmup_iters = 1000;
  CHECK_THROWS_AS(lr_schedule(0, c), DataError);
}

TEST_CASE("compute_losses matches a direct recomputation") {
  auto model = sphere_model(40, 2);
  for (std::size_t m = 0; m < model.cloud.size(); ++m) {
    model.cloud.points[m].geometry_moment = 1.0 + 0.01 * m;
    model.cloud.points[m].normal =
        (model.cloud.initial_normals[m] + 0.05 * Vec3::UnitX()).normalized();
  }
  std::vector<RayResult> rendered(3);
  std::vector<Vec3> gt(3);
  Rng rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    rendered[i].rgb = Vec3(uni(rng), uni(rng), uni(rng));
    rendered[i].weights = {0.1 * (i + 1), 0.2, 0.05};
    rendered[i].entropy = ray_entropy(rendered[i].weights);
    gt[i] = Vec3(uni(rng), uni(rng), uni(rng));
  }
  LossWeights w;
  w.w_render = 0.7;
  w.w_entropy = 0.02;
  w.w_winding = 0.003;
  w.w_normal = 0.05;
  auto loss = compute_losses(model, rendered, gt, w);

  double render = 0, entropy = 0, winding = 0, normal = 0;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) render += std::fabs(rendered[i].rgb[c] - gt[i][c]) / 3.0;
    entropy += rendered[i].entropy;
  }
  for (std::size_t m = 0; m < model.cloud.size(); ++m) {
    double db = model.cloud.points[m].geometry_moment - 1.0;
    winding += db * db;
    normal += (model.cloud.points[m].normal - model.cloud.initial_normals[m]).squaredNorm();
  }
  CHECK(loss.render == doctest::Approx(0.7 * render / 3.0).epsilon(1e-12));
  CHECK(loss.entropy == doctest::Approx(0.02 * entropy / 3.0).epsilon(1e-12));
  CHECK(loss.winding == doctest::Approx(0.003 * winding).epsilon(1e-12));
  CHECK(loss.normal == doctest::Approx(0.05 * normal).epsilon(1e-12));
  CHECK(loss.total() ==
        doctest::Approx(loss.render + loss.entropy + loss.winding + loss.normal).epsilon(1e-12));
  CHECK_THROWS_AS(compute_losses(model, rendered, std::span<const Vec3>(gt).subspan(1), w),
                  DataError);
}

TEST_CASE("adam first step closed form and zero-lr exactness") {
  Adam adam;
  double p[2] = {1.5, -0.25};
  double g[2] = {0.3, -2.0};
  adam.step(std::span<double>(p, 2), std::span<const double>(g, 2), 0.1);
  // after one step mhat = g, vhat = g^2, so the update is lr g / (|g| + eps)
  CHECK(p[0] == doctest::Approx(1.5 - 0.1 * 0.3 / (0.3 + adam.eps)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-0.25 + 0.1 * 2.0 / (2.0 + adam.eps)).epsilon(1e-12));

  Adam frozen;
  double q[2] = {1.5, -0.25};
  frozen.step(std::span<double>(q, 2), std::span<const double>(g, 2), 0.0);
  CHECK(q[0] == 1.5);
  CHECK(q[1] == -0.25);
  CHECK(frozen.t == 1);
  double g3[3] = {1, 1, 1};
  double q3[3] = {0, 0, 0};
  frozen.step(std::span<double>(q3, 3), std::span<const double>(g3, 3), 0.0);  // group grew
  CHECK(frozen.m.size() == 3);
}

TEST_CASE("training gradient matches finite differences of the total loss") {
  auto model = sphere_model(12, 3, 0.3);
  model.beta_bh = kInf;
  model.background = Vec3(0.05, 0.05, 0.05);
  for (std::size_t m = 0; m < model.cloud.size(); ++m)
    for (int k = 0; k < 3; ++k) model.cloud.points[m].appearance_moments[k] = 0.3 * (k - 1);

  // fixed rays and sample positions keep the loss smooth in the parameters
  std::vector<Ray> rays;
  rays.push_back({Vec3(0.1, 0.05, -3.0), Vec3(0.02, -0.01, 1.0).normalized()});
  rays.push_back({Vec3(-0.2, 0.1, -3.0), Vec3(-0.03, 0.02, 1.0).normalized()});
  RaySamples samples;
  for (int j = 0; j < 14; ++j) samples.t.push_back(0.8 + 0.3 * j);
  samples.delta.assign(14, 0.3);
  samples.delta[0] = samples.t[0] - 0.5;
  // references outside the renderable range keep the L1 sign fixed under the
  // finite-difference probes
  std::vector<Vec3> gt = {Vec3(-0.5, 2.0, -0.3), Vec3(1.8, -0.7, 1.5)};
  LossWeights lw;
  lw.w_render = 1.0;
  lw.w_entropy = 0.01;
  lw.w_winding = 0.001;
  lw.w_normal = 0.01;
  const int B = static_cast<int>(rays.size());

  auto loss_of = [&](SceneModel& mdl) {
    mdl.refresh_moments();
    std::vector<RayResult> res(B);
    for (int b = 0; b < B; ++b) res[b] = render_ray(mdl, rays[b], samples);
    return compute_losses(mdl, res, gt, lw).total();
  };

  // analytic gradient through the adjoint, mirroring the trainer's backward
  model.refresh_moments();
  GradientBuffer buf = model.tree.make_buffer();
  RenderGrads rg;
  rg.resize_for(model.head);
  for (int b = 0; b < B; ++b) {
    RayTape tape;
    RayResult res = render_ray(model, rays[b], samples, {}, &tape);
    Vec3 d_rgb;
    for (int c = 0; c < 3; ++c) {
      double d = res.rgb[c] - gt[b][c];
      d_rgb[c] = (d > 0 ? 1.0 : -1.0) * lw.w_render / (3.0 * B);
    }
    std::vector<double> d_weight(res.weights.size(), 0.0);
    for (std::size_t j = 0; j < d_weight.size(); ++j)
      if (res.weights[j] > 0) d_weight[j] = -lw.w_entropy / B * (std::log(res.weights[j]) + 1.0);
    render_ray_backward(model, tape, d_rgb, d_weight, buf, rg);
  }
  PointGradients pg = model.tree.flush_gradients(buf);
  for (std::size_t m = 0; m < model.cloud.size(); ++m) {
    pg.moment(m, 0) += 2.0 * lw.w_winding * (model.cloud.points[m].geometry_moment - 1.0);
    pg.normals[m] += 2.0 * lw.w_normal *
                     (model.cloud.points[m].normal - model.cloud.initial_normals[m]);
  }

  const double h = 1e-5;
  for (std::size_t m : {std::size_t(0), std::size_t(7)}) {
    for (int ch = 0; ch < 4; ++ch) {
      auto probe = model;
      auto& val = ch == 0 ? probe.cloud.points[m].geometry_moment
                          : probe.cloud.points[m].appearance_moments[ch - 1];
      double base = val;
      val = base + h;
      double up = loss_of(probe);
      val = base - h;
      double dn = loss_of(probe);
      double fd = (up - dn) / (2 * h);
      double got = pg.moment(m, ch);
      CHECK(std::fabs(got - fd) <= 1e-3 * std::max(1e-4, std::fabs(fd)));
    }
    for (int c = 0; c < 3; ++c) {
      auto probe = model;
      double base = probe.cloud.points[m].normal[c];
      probe.cloud.points[m].normal[c] = base + h;
      double up = loss_of(probe);
      probe.cloud.points[m].normal[c] = base - h;
      double dn = loss_of(probe);
      double fd = (up - dn) / (2 * h);
      CHECK(std::fabs(pg.normals[m][c] - fd) <= 1e-3 * std::max(1e-4, std::fabs(fd)));
    }
  }
}

TEST_CASE("zero learning rates leave the model bit-identical") {
  auto model = sphere_model(60, 3);
  model.background = Vec3(0.1, 0.2, 0.3);
  auto rc = cheap_render();
  auto views = two_views(model, 12, 10, rc);
  auto before = model;

  TrainConfig cfg;
  cfg.batch_rays = 16;
  cfg.lr_points = 0.0;
  cfg.lr_head = 0.0;
  cfg.lr_scalars = 0.0;
  cfg.warmup_iters = 0;
  cfg.total_iters = 10;
  cfg.grow_every = 0;
  cfg.render = rc;
  Trainer trainer(model, views, {}, cfg);
  auto met = trainer.step();
  CHECK(!met.rejected);
  CHECK(std::isfinite(met.loss.total()));
  CHECK(trainer.iteration() == 1);
  CHECK(models_identical(model, before));
}

TEST_CASE("fixed seed makes training deterministic") {
  auto base = sphere_model(60, 3);
  auto rc = cheap_render();
  auto views = two_views(base, 12, 10, rc);
  TrainConfig cfg;
  cfg.batch_rays = 8;
  cfg.lr_points = 0.02;
  cfg.lr_head = 0.01;
  cfg.warmup_iters = 0;
  cfg.total_iters = 20;
  cfg.grow_every = 0;
  cfg.rng_seed = 42;
  cfg.render = rc;

  auto a = base;
  auto b = base;
  Trainer ta(a, views, {}, cfg);
  Trainer tb(b, views, {}, cfg);
  for (int i = 0; i < 2; ++i) {
    auto ma = ta.step();
    auto mb = tb.step();
    CHECK(ma.loss.total() == mb.loss.total());
  }
  CHECK(models_identical(a, b));
  CHECK(!models_identical(a, base));  // nonzero rates actually moved something
}

TEST_CASE("appearance fitting reduces the render loss") {
  auto target = sphere_model(150, 3);
  for (auto& p : target.cloud.points) p.appearance_moments = {2.0, 0.0, -2.0};
  target.refresh_moments();
  auto rc = cheap_render();
  auto views = two_views(target, 16, 12, rc);

  auto model = sphere_model(150, 3);
  TrainConfig cfg;
  cfg.batch_rays = 48;
  cfg.lr_points = 0.08;
  cfg.lr_head = 0.0;
  cfg.warmup_iters = 0;
  cfg.total_iters = 40;
  cfg.grow_every = 0;
  cfg.rng_seed = 3;
  cfg.render = rc;
  Trainer trainer(model, views, {}, cfg);
  double early = 0, late = 0;
  for (int i = 0; i < 12; ++i) {
    auto met = trainer.step();
    REQUIRE(!met.rejected);
    if (i < 3) early += met.loss.render;
    if (i >= 9) late += met.loss.render;
  }
  CHECK(late < 0.8 * early);
}

TEST_CASE("non-finite loss rejects the step without touching parameters") {
  auto model = sphere_model(40, 3);
  auto rc = cheap_render();
  auto views = two_views(model, 10, 8, rc);
  model.background = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  auto before = model;
  TrainConfig cfg;
  cfg.batch_rays = 4;
  cfg.warmup_iters = 0;
  cfg.total_iters = 10;
  cfg.grow_every = 0;
  cfg.render = rc;
  Trainer trainer(model, views, {}, cfg);
  auto met = trainer.step();
  CHECK(met.rejected);
  CHECK(trainer.iteration() == 1);
  // background stays NaN, which is what poisoned the loss; everything else is untouched
  model.background = before.background = Vec3::Zero();
  CHECK(models_identical(model, before));
}

TEST_CASE("point growing respects the distance threshold and the cap") {
  auto model = sphere_model(200, 3);
  auto rc = cheap_render();
  auto views = two_views(model, 24, 18, rc);
  TrainConfig cfg;
  cfg.grow_rays = 96;
  cfg.render = rc;

  SUBCASE("unreachable threshold grows nothing") {
    cfg.grow_distance_threshold = 1e9;
    Rng rng(7);
    auto before = model;
    CHECK(point_growing(model, cfg, views, rng) == 0);
    CHECK(model.cloud.size() == before.cloud.size());
  }
  SUBCASE("tiny threshold grows up to ten percent") {
    cfg.grow_distance_threshold = 1e-9;
    Rng rng(7);
    int grown = point_growing(model, cfg, views, rng);
    CHECK(grown > 0);
    CHECK(grown <= 20);  // ceil(0.1 * 200)
    CHECK(model.cloud.size() == 200 + static_cast<std::size_t>(grown));
    CHECK(model.cloud.initial_normals.size() == model.cloud.size());
    CHECK(model.tree.point_count() == model.cloud.size());
    for (std::size_t m = 200; m < model.cloud.size(); ++m) {
      const auto& p = model.cloud.points[m];
      CHECK(std::fabs(p.normal.norm() - 1.0) <= 1e-9);
      CHECK(p.area > 0);
      // new points land near the implicit surface of the unit sphere
      CHECK(std::fabs(p.position.norm() - 1.0) <= 0.1);
      CHECK(p.appearance_moments.size() == 3);
    }
  }
}

TEST_CASE("point growing concentrates in a missing polar cap") {
  SceneModel model;
  model.cloud = sphere_cloud(500, 1.0, 3);
  // punch out the cap z > 0.7 and regrow from views that can see the hole
  std::erase_if(model.cloud.points, [](const OrientedPoint& p) { return p.position.z() > 0.7; });
  model.cloud.initial_normals.clear();
  model.kernel.epsilon = 0.15;
  model.prepare();
  const std::size_t m0 = model.cloud.size();
  auto rc = cheap_render();
  std::vector<TrainView> views;
  for (const Vec3& eye : {Vec3(0.4, 0.3, 3.0), Vec3(-0.3, 0.5, 3.0)}) {
    TrainView v;
    v.camera = Camera::look_at(eye, Vec3(0, 0, 0.8), Vec3::UnitY(), 35.0, 24, 18);
    v.image = render_image(model, v.camera, rc);
    views.push_back(std::move(v));
  }
  TrainConfig cfg;
  cfg.grow_rays = 128;
  cfg.render = rc;
  Rng rng(5);
  int grown = point_growing(model, cfg, views, rng);
  REQUIRE(grown > 0);
  int in_cap = 0;
  for (std::size_t m = m0; m < model.cloud.size(); ++m)
    if (model.cloud.points[m].position.z() > 0.55) ++in_cap;
  CHECK(in_cap >= (4 * grown + 4) / 5);
}

TEST_CASE("checkpoint round trip is bit exact") {
  SceneModel model;
  model.cloud = sphere_cloud(50, 1.0, 2);
  Rng rng(19);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (auto& p : model.cloud.points) {
    p.geometry_moment = 1.0 + 0.1 * uni(rng);
    for (double& a : p.appearance_moments) a = uni(rng);
  }
  model.kernel.epsilon = 0.123;
  model.lambda_scale = 17.5;
  model.beta_bh = 3.0;
  model.background = Vec3(0.1, 0.2, 0.3);
  model.head.variant = HeadVariant::TinyMlp;
  model.head.with_albedo = true;
  model.prepare();
  model.head.init_mlp({8}, rng);

  std::string path = "/tmp/dipole_test_ck.bin";
  save_checkpoint(model, 137, path);
  auto ck = load_checkpoint(path);
  std::remove(path.c_str());
  CHECK(ck.iter == 137);
  CHECK(models_identical(ck.model, model));
  CHECK(ck.model.beta_bh == model.beta_bh);
  CHECK(ck.model.head.with_albedo);
  CHECK(ck.model.head.variant == HeadVariant::TinyMlp);
  for (std::size_t m = 0; m < model.cloud.size(); ++m) {
    CHECK(ck.model.cloud.points[m].position == model.cloud.points[m].position);
    CHECK(ck.model.cloud.points[m].area == model.cloud.points[m].area);
    CHECK(ck.model.cloud.initial_normals[m] == model.cloud.initial_normals[m]);
  }
  Vec3 x(0.2, -0.4, 1.3);
  CHECK(geometry_field(ck.model, x) == geometry_field(model, x));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.bin"), DataError);
}

TEST_CASE("metrics csv appends a header once") {
  std::string path = "/tmp/dipole_test_metrics.csv";
  std::remove(path.c_str());
  StepMetrics m;
  m.iter = 0;
  m.loss.render = 0.5;
  m.lr_multiplier = 1.0;
  Trainer::append_metrics_csv(path, m);
  m.iter = 1;
  m.grown_points = 3;
  Trainer::append_metrics_csv(path, m);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  std::remove(path.c_str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("iter,", 0) == 0);
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[2].rfind("1,", 0) == 0);
}
