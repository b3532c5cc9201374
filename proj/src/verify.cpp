#include "dipole/verify.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "dipole/kernels.hpp"
#include "dipole/meshing.hpp"
#include "dipole/oracles.hpp"
#include "dipole/renderer.hpp"

namespace dipole {

namespace {

const double kInf = std::numeric_limits<double>::infinity();

OrientedPointCloud sphere_cloud(int m, double radius = 1.0, int k_appearance = 0) {
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
    p.appearance_moments.assign(k_appearance, 0.0);
  }
  cloud.snapshot_initial_normals();
  return cloud;
}

OrientedPointCloud random_cloud(int m, std::uint64_t seed, int k_appearance = 0) {
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

CheckResult timed(const std::string& name, const std::function<void(CheckResult&)>& body) {
  CheckResult res;
  res.name = name;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(res);
  } catch (const std::exception& e) {
    res.pass = false;
    res.detail = std::string("exception: ") + e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

CheckResult check_erf() {
  return timed("erf-reference", [](CheckResult& res) {
    double worst = 0;
    for (double x = -8.0; x <= 8.0; x += 1e-3)
      worst = std::max(worst, std::fabs(erf_approx(x) - erf_reference(x)));
    res.measured = worst;
    res.bound = 1e-13;
    res.pass = worst <= res.bound;
    res.detail = "max |erf - long double reference| on [-8, 8]";
  });
}

CheckResult check_bh_exact_primal() {
  return timed("bh-exact-primal", [](CheckResult& res) {
    auto cloud = random_cloud(400, 21, 2);
    SceneModel model;
    model.cloud = cloud;
    model.kernel.epsilon = 0.1;
    model.beta_bh = kInf;
    model.prepare();
    model.refresh_moments();
    Rng rng(22);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    std::vector<double> out(model.tree.channels());
    double worst = 0;
    for (int q = 0; q < 200; ++q) {
      Vec3 x(uni(rng), uni(rng), uni(rng));
      model.tree.primal(x, model.kernel, kInf, out);
      for (int c = 0; c < model.tree.channels(); ++c) {
        double want = naive_dipole_sum(cloud, x, model.kernel, c,
                                       c == 0 ? ChannelKernel::Dipole : ChannelKernel::Radial);
        worst = std::max(worst, std::fabs(out[c] - want) / std::max(1e-3, std::fabs(want)));
      }
    }
    res.measured = worst;
    res.bound = 1e-12;
    res.pass = worst <= res.bound;
    res.detail = "max relative primal error vs naive sums at beta_bh = inf";
  });
}

CheckResult check_bh_exact_adjoint() {
  return timed("bh-exact-adjoint", [](CheckResult& res) {
    auto cloud = random_cloud(200, 31, 1);
    SceneModel model;
    model.cloud = cloud;
    model.kernel.epsilon = 0.15;
    model.beta_bh = kInf;
    model.prepare();
    model.refresh_moments();
    Rng rng(32);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    std::vector<AdjointQuerySpec> queries;
    GradientBuffer buf = model.tree.make_buffer();
    for (int q = 0; q < 30; ++q) {
      AdjointQuerySpec spec;
      spec.x = Vec3(uni(rng), uni(rng), uni(rng));
      spec.d_out = {uni(rng), uni(rng)};
      model.tree.adjoint(spec.x, model.kernel, kInf, spec.d_out, {}, buf);
      queries.push_back(std::move(spec));
    }
    PointGradients got = model.tree.flush_gradients(buf);
    PointGradients want = naive_adjoint(cloud, queries, model.kernel, model.tree.channel_kernels());
    double worst = 0;
    for (std::size_t m = 0; m < cloud.size(); ++m) {
      for (int c = 0; c < 2; ++c)
        worst = std::max(worst, std::fabs(got.moment(m, c) - want.moment(m, c)) /
                                    std::max(1e-3, std::fabs(want.moment(m, c))));
      worst = std::max(worst, (got.normals[m] - want.normals[m]).norm() /
                                  std::max(1e-3, want.normals[m].norm()));
    }
    res.measured = worst;
    res.bound = 1e-12;
    res.pass = worst <= res.bound;
    res.detail = "max relative flushed-gradient error vs naive adjoint at beta_bh = inf";
  });
}

CheckResult check_bh_envelope() {
  return timed("bh-farfield-envelope", [](CheckResult& res) {
    auto cloud = sphere_cloud(10000);
    SceneModel model;
    model.cloud = cloud;
    model.kernel.epsilon = 0.05;
    model.prepare();
    model.refresh_moments();
    Rng rng(41);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    std::vector<Vec3> queries;
    for (int q = 0; q < 100; ++q) queries.emplace_back(uni(rng), uni(rng), uni(rng));
    auto worst_at = [&](double beta) {
      double worst = 0;
      for (const Vec3& x : queries) {
        double got = model.tree.primal_channel(x, model.kernel, beta, 0);
        double want = model.tree.primal_channel(x, model.kernel, kInf, 0);
        worst = std::max(worst, std::fabs(got - want) / std::max(1.0, std::fabs(want)));
      }
      return worst;
    };
    double e2 = worst_at(2.0), e4 = worst_at(4.0);
    // zeroth-order far field: error envelope 0.25 / beta^2, halving rate 4x
    res.measured = std::max(e2 / (0.25 / 4.0), e4 / (0.25 / 16.0));
    res.bound = 1.0;
    res.pass = res.measured <= res.bound && e4 <= 0.5 * e2;
    res.detail = "far-field error against the 0.25/beta^2 envelope at beta 2 and 4";
  });
}

CheckResult check_psr() {
  return timed("psr-equivalence", [](CheckResult& res) {
    auto cloud = sphere_cloud(1500);
    KernelParams params;
    params.epsilon = 0.2;
    const int n = 41;
    const Vec3 lo = Vec3::Constant(-2.0), hi = Vec3::Constant(2.0);
    PsrGrid grid = psr_grid_solve(cloud, params, n, lo, hi);
    SceneModel model;
    model.cloud = cloud;
    model.kernel = params;
    model.prepare();
    model.refresh_moments();
    // interior restriction: > 3 eps from the zero-Dirichlet boundary
    double margin = 3.0 * params.epsilon;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, linf = 0;
    long count = 0;
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          Vec3 x = grid.node(i, j, k);
          if ((x - lo).minCoeff() < margin || (hi - x).minCoeff() < margin) continue;
          double a = grid.at(i, j, k);
          double b = winding_number(model, x);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
          linf = std::max(linf, std::fabs(a - b));
          ++count;
        }
    double cov = sxy / count - (sx / count) * (sy / count);
    double va = sxx / count - (sx / count) * (sx / count);
    double vb = syy / count - (sy / count) * (sy / count);
    double corr = cov / std::sqrt(std::max(1e-30, va * vb));
    res.measured = corr;
    res.bound = 0.99;
    res.pass = corr >= 0.99 && linf <= 0.05;
    res.detail = "screened-Poisson solution vs dipole sum: interior correlation (and Linf " +
                 std::to_string(linf) + " <= 0.05)";
  });
}

CheckResult check_winding_mc() {
  return timed("winding-stochastic", [](CheckResult& res) {
    auto cloud = random_cloud(50, 51);
    Rng rng(52);
    std::uniform_real_distribution<double> beta_dist(0.3, 0.9);
    for (auto& p : cloud.points) p.geometry_moment = beta_dist(rng);
    KernelParams params;
    params.epsilon = 0.1;
    std::uniform_real_distribution<double> uni(-1.2, 1.2);
    std::vector<Vec3> queries;
    for (int q = 0; q < 5; ++q) queries.emplace_back(uni(rng), uni(rng), uni(rng));
    auto est = stochastic_winding_mc(cloud, params.epsilon, queries, 8000, 53);
    double worst = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      double want = naive_dipole_sum(cloud, queries[q], params, 0);
      worst = std::max(worst, std::fabs(est[q].mean - want) / (3.0 * est[q].std_error));
    }
    res.measured = worst;
    res.bound = 1.0;
    res.pass = worst <= res.bound;
    res.detail = "stochastic winding estimate, |mean - dipole sum| in units of 3 standard errors";
  });
}

CheckResult check_gauss_lemma() {
  return timed("gauss-lemma", [](CheckResult& res) {
    auto cloud = sphere_cloud(4000);
    SceneModel model;
    model.cloud = cloud;
    model.kernel.epsilon = 0.05;
    model.prepare();
    model.refresh_moments();
    double center = winding_number(model, Vec3::Zero());
    double surface = winding_number(model, Vec3(1.0, 0.0, 0.0));
    double far = std::fabs(winding_number(model, Vec3(0.0, 3.0, 0.0)));
    double worst = std::max({std::fabs(center - 1.0) / 0.1, std::fabs(surface - 0.5) / 0.1,
                             far / 0.05});
    res.measured = worst;
    res.bound = 1.0;
    res.pass = worst <= res.bound;
    res.detail = "winding number at the sphere center / surface / 3 radii vs 1, 1/2, 0";
  });
}

CheckResult check_quadrature() {
  return timed("quadrature-convergence", [](CheckResult& res) {
    SceneModel model;
    model.cloud = sphere_cloud(600, 1.0, 3);
    for (auto& p : model.cloud.points) p.appearance_moments = {1.0, 0.0, -1.0};
    model.kernel.epsilon = 0.1;
    model.background = Vec3(0.2, 0.3, 0.4);
    model.prepare();
    model.refresh_moments();
    Ray ray{Vec3(0.1, 0.05, -3.0), Vec3(0.0, 0.0, 1.0)};
    auto render_at = [&](int count) {
      RaySamples s;
      for (int j = 0; j < count; ++j) s.t.push_back(0.5 + 5.0 * (j + 0.5) / count);
      s.delta.assign(count, 5.0 / count);
      return render_ray(model, ray, s).rgb;
    };
    Vec3 want = render_at(4096);
    double prev = kInf, last = 0;
    bool monotone = true;
    for (int count : {16, 64, 256}) {
      double err = (render_at(count) - want).cwiseAbs().maxCoeff();
      monotone = monotone && err <= prev + 1e-15;
      prev = err;
      last = err;
    }
    res.measured = last;
    res.bound = 1e-3;
    res.pass = monotone && last <= res.bound;
    res.detail = "per-channel quadrature error at 16/64/256 samples vs a 4096-sample reference";
  });
}

CheckResult check_ablation() {
  return timed("mesh-ablation-rms", [](CheckResult& res) {
    auto cloud = sphere_cloud(2000);
    Rng rng(17);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (auto& p : cloud.points) p.position += Vec3(noise(rng), noise(rng), noise(rng));
    // matched widths: tau-regularized vs denominator-cutoff kernel
    auto mesh_rms = [&](bool desingularized) {
      SceneModel model;
      model.cloud = cloud;
      if (desingularized) {
        model.kernel.desingularized = true;
        model.kernel.desing_delta = 0.08;
      } else {
        model.kernel.epsilon = 0.08;
      }
      model.beta_bh = 4.0;
      model.prepare();
      model.refresh_moments();
      auto grid = sample_grid(model, {48, 48, 48}, Vec3::Constant(-1.4), Vec3::Constant(1.4));
      auto mesh = marching_cubes(grid);
      if (mesh.empty()) return kInf;
      return vertex_rms_to_sphere(mesh, Vec3::Zero(), 1.0);
    };
    double reg = mesh_rms(false);
    double desing = mesh_rms(true);
    res.measured = reg;
    res.bound = desing;
    res.pass = reg < desing;
    res.detail = "vertex RMS to the true sphere, regularized vs singular kernel";
  });
}

CheckResult check_fd_gradient() {
  return timed("fd-gradient", [](CheckResult& res) {
    SceneModel model;
    model.cloud = sphere_cloud(10, 1.0, 3);
    model.kernel.epsilon = 0.3;
    model.beta_bh = kInf;
    model.background = Vec3(0.05, 0.05, 0.05);
    model.prepare();
    model.refresh_moments();
    Ray ray{Vec3(0.1, 0.05, -3.0), Vec3(0.02, -0.01, 1.0).normalized()};
    RaySamples samples;
    for (int j = 0; j < 14; ++j) samples.t.push_back(0.8 + 0.3 * j);
    samples.delta.assign(14, 0.3);
    samples.delta[0] = samples.t[0] - 0.5;
    Vec3 gt(2.0, -0.5, 1.5);  // out of range so the L1 sign is fixed
    auto loss_of = [&](SceneModel& m) {
      m.refresh_moments();
      Vec3 d = render_ray(m, ray, samples).rgb - gt;
      return (std::fabs(d.x()) + std::fabs(d.y()) + std::fabs(d.z())) / 3.0;
    };
    RayTape tape;
    RayResult base = render_ray(model, ray, samples, {}, &tape);
    Vec3 d_rgb;
    for (int c = 0; c < 3; ++c) d_rgb[c] = (base.rgb[c] - gt[c] > 0 ? 1.0 : -1.0) / 3.0;
    GradientBuffer buf = model.tree.make_buffer();
    RenderGrads rg;
    rg.resize_for(model.head);
    render_ray_backward(model, tape, d_rgb, {}, buf, rg);
    PointGradients pg = model.tree.flush_gradients(buf);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t m : {std::size_t(0), std::size_t(5)}) {
      for (int ch = 0; ch < 4; ++ch) {
        auto probe = model;
        auto& val = ch == 0 ? probe.cloud.points[m].geometry_moment
                            : probe.cloud.points[m].appearance_moments[ch - 1];
        double base_v = val;
        val = base_v + h;
        double up = loss_of(probe);
        val = base_v - h;
        double dn = loss_of(probe);
        double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::fabs(pg.moment(m, ch) - fd) / std::max(1e-4, std::fabs(fd)));
      }
    }
    {
      auto probe = model;
      probe.lambda_scale += h;
      double up = loss_of(probe);
      probe.lambda_scale -= 2 * h;
      double dn = loss_of(probe);
      double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::fabs(rg.d_lambda - fd) / std::max(1e-4, std::fabs(fd)));
    }
    res.measured = worst;
    res.bound = 1e-3;
    res.pass = worst <= res.bound;
    res.detail = "relative gap between the render-loss gradient and central differences";
  });
}

}  // namespace

CheckResult check_tau_profile(const std::function<double(double)>& profile) {
  return timed("tau-profile", [&](CheckResult& res) {
    double worst = std::fabs(profile(0.0));
    worst = std::max(worst, std::fabs(profile(8.0) - 1.0));
    double prev = profile(0.0);
    for (double t = 0.01; t <= 6.0; t += 0.01) {
      double v = profile(t);
      worst = std::max(worst, std::max(0.0, prev - v));  // monotone violation
      prev = v;
    }
    for (double t : {0.1, 0.5, 1.0, 2.0, 4.0}) {
      double fd = (profile(t + 1e-6) - profile(t - 1e-6)) / 2e-6;
      worst = std::max(worst, std::fabs(fd - tau_prime(t)));
    }
    res.measured = worst;
    res.bound = 1e-6;
    res.pass = worst <= res.bound;
    res.detail = "radial profile endpoints, monotonicity and derivative consistency";
  });
}

std::vector<CheckResult> run_verification(const std::string& filter, int workers) {
  (void)workers;  // every check is deterministic and cheap enough serially
  std::vector<std::pair<std::string, std::function<CheckResult()>>> all = {
      {"erf-reference", check_erf},
      {"tau-profile", [] { return check_tau_profile(tau); }},
      {"bh-exact-primal", check_bh_exact_primal},
      {"bh-exact-adjoint", check_bh_exact_adjoint},
      {"bh-farfield-envelope", check_bh_envelope},
      {"psr-equivalence", check_psr},
      {"winding-stochastic", check_winding_mc},
      {"gauss-lemma", check_gauss_lemma},
      {"quadrature-convergence", check_quadrature},
      {"mesh-ablation-rms", check_ablation},
      {"fd-gradient", check_fd_gradient},
  };
  std::vector<CheckResult> results;
  for (auto& [name, fn] : all)
    if (filter.empty() || name.find(filter) != std::string::npos) results.push_back(fn());
  return results;
}

bool report_verification(const std::vector<CheckResult>& results, std::ostream& out) {
  bool all_pass = true;
  for (const CheckResult& r : results) {
    out << "{\"check\":\"" << r.name << "\",\"pass\":" << (r.pass ? "true" : "false")
        << ",\"measured\":" << r.measured << ",\"bound\":" << r.bound << ",\"seconds\":"
        << r.seconds << ",\"detail\":\"" << r.detail << "\"}\n";
    all_pass = all_pass && r.pass;
  }
  int passed = 0;
  for (const CheckResult& r : results) passed += r.pass ? 1 : 0;
  out << passed << "/" << results.size() << " checks passed\n";
  for (const CheckResult& r : results)
    if (!r.pass) out << "FAILED " << r.name << ": " << r.detail << " (measured " << r.measured
                     << ", bound " << r.bound << ")\n";
  return all_pass && !results.empty();
}

}  // namespace dipole
