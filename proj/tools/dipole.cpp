#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dipole/meshing.hpp"
#include "dipole/oracles.hpp"
#include "dipole/ply.hpp"
#include "dipole/scene.hpp"
#include "dipole/verify.hpp"

namespace {

using namespace dipole;

// flags shared across subcommands; unset optionals fall back to the config
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool shadow_rays = false;
  std::optional<std::string> head;
  std::optional<double> beta_bh;
  std::optional<double> epsilon;
  std::optional<int> iters;
  std::optional<int> resolution;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "JSON run configuration");
  cmd->add_option("--seed", ov.seed, "random seed (overrides the config)");
  cmd->add_option("--workers", ov.workers, "worker threads, 0 = hardware");
  cmd->add_flag("--shadow-rays", ov.shadow_rays, "enable shadow-ray direct illumination");
  cmd->add_option("--head", ov.head, "radiance head: direct-rgb or tiny-mlp")
      ->check(CLI::IsMember({"direct-rgb", "tiny-mlp"}));
  cmd->add_option("--beta-bh", ov.beta_bh, "Barnes-Hut opening threshold");
  cmd->add_option("--epsilon", ov.epsilon, "kernel regularization width");
  cmd->add_option("--iters", ov.iters, "training iterations");
  cmd->add_option("--resolution", ov.resolution, "mesh extraction grid resolution");
}

RunConfig resolve_config(const Overrides& ov) {
  RunConfig cfg = ov.config_path.empty() ? RunConfig() : load_run_config(ov.config_path);
  if (ov.seed) cfg.train.rng_seed = *ov.seed;
  if (ov.shadow_rays) cfg.train.shadow_rays = true;
  if (ov.head) cfg.head = *ov.head;
  if (ov.beta_bh) cfg.beta_bh = *ov.beta_bh;
  if (ov.epsilon) cfg.epsilon = *ov.epsilon;
  if (ov.iters) cfg.train.total_iters = *ov.iters;
  if (ov.resolution) cfg.mesh_resolution = *ov.resolution;
  cfg.validate();
  return cfg;
}

void write_mesh(const SceneModel& model, int resolution, int workers, const std::string& path) {
  auto grid = sample_grid(model, {resolution, resolution, resolution}, Vec3::Zero(), Vec3::Zero(),
                          workers);
  auto mesh = marching_cubes(grid);
  export_obj(mesh, path);
  std::printf("mesh: %zu vertices, %zu triangles -> %s\n", mesh.vertices.size(),
              mesh.triangles.size(), path.c_str());
}

int cmd_mesh(const std::string& cloud_path, const std::string& out_path, const Overrides& ov) {
  RunConfig cfg = resolve_config(ov);
  auto cloud = load_ply(cloud_path, cfg.k_appearance, cfg.train.rng_seed);
  Rng rng(cfg.train.rng_seed);
  SceneModel model = make_model(std::move(cloud), cfg, rng);
  model.refresh_moments();
  write_mesh(model, cfg.mesh_resolution, ov.workers, out_path);
  return 0;
}

int cmd_reconstruct(const std::string& scene_path, const std::string& out_dir,
                    const Overrides& ov) {
  RunConfig cfg = resolve_config(ov);
  std::filesystem::create_directories(out_dir);
  SceneDescription scene = load_scene(scene_path);
  std::vector<TrainView> views = load_views(scene);
  auto cloud = load_ply(scene.cloud_path, cfg.k_appearance, cfg.train.rng_seed);
  Rng rng(cfg.train.rng_seed);
  SceneModel model = make_model(std::move(cloud), cfg, rng);
  model.background = scene.background;
  model.refresh_moments();

  std::string metrics_path = out_dir + "/metrics.csv";
  std::filesystem::remove(metrics_path);
  if (cfg.train.total_iters > 0) {
    Trainer trainer(model, std::move(views), scene.lights, cfg.train);
    for (int i = 0; i < cfg.train.total_iters; ++i) {
      StepMetrics met = trainer.step();
      Trainer::append_metrics_csv(metrics_path, met);
      if (met.iter % 50 == 0 || met.iter + 1 == cfg.train.total_iters)
        std::printf("iter %d loss %.6f lr %.3f%s%s\n", met.iter, met.loss.total(),
                    met.lr_multiplier, met.grown_points ? " grew" : "",
                    met.rejected ? " rejected" : "");
    }
  }
  save_checkpoint(model, cfg.train.total_iters, out_dir + "/model.ckpt");
  write_mesh(model, cfg.mesh_resolution, ov.workers, out_dir + "/mesh.obj");
  return 0;
}

int cmd_render(const std::string& checkpoint_path, const std::string& spec_path,
               const std::string& out_path, const Overrides& ov) {
  RunConfig cfg = resolve_config(ov);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ov.beta_bh) ck.model.beta_bh = *ov.beta_bh;
  if (ov.epsilon) {
    ck.model.kernel.epsilon = *ov.epsilon;
    ck.model.refresh_moments();
  }
  RenderSpec spec = load_render_spec(spec_path);
  Image image = render_image(ck.model, spec.camera, cfg.train.render, spec.lights, ov.workers);
  if (out_path.ends_with(".pfm"))
    save_pfm(image, out_path);
  else
    save_png(image, out_path);
  std::printf("render: %dx%d -> %s\n", image.width, image.height, out_path.c_str());
  return 0;
}

int cmd_bench(const std::vector<int>& sizes, std::vector<double> betas, const std::string& out,
              const Overrides& ov) {
  RunConfig cfg = resolve_config(ov);
  if (betas.empty()) betas = {2.0, 4.0, 8.0, std::numeric_limits<double>::infinity()};
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw DataError("bench: cannot open " + out);
    os = &file;
  }
  *os << "points,beta,naive_ms,tree_ms,max_rel_err,mean_visited\n";
  Rng rng(cfg.train.rng_seed);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  for (int m : sizes) {
    SceneModel model;
    // fibonacci sphere: deterministic, uniform-ish
    model.cloud.points.resize(m);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < m; ++i) {
      double z = 1.0 - 2.0 * (i + 0.5) / m;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec3 n(r * std::cos(golden * i), r * std::sin(golden * i), z);
      model.cloud.points[i].position = n;
      model.cloud.points[i].normal = n;
      model.cloud.points[i].area = 4.0 * kPi / m;
    }
    model.kernel.epsilon = cfg.epsilon > 0 ? cfg.epsilon : 0.05;
    model.prepare();
    model.refresh_moments();
    std::vector<Vec3> queries;
    for (int q = 0; q < 100; ++q) queries.emplace_back(uni(rng), uni(rng), uni(rng));
    std::vector<double> naive(queries.size());
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < queries.size(); ++q)
      naive[q] = naive_dipole_sum(model.cloud, queries[q], model.kernel, 0);
    double naive_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (double beta : betas) {
      long visited_total = 0;
      double worst = 0;
      auto t1 = std::chrono::steady_clock::now();
      for (std::size_t q = 0; q < queries.size(); ++q) {
        long visited = 0;
        double got = model.tree.primal_channel(queries[q], model.kernel, beta, 0, &visited);
        visited_total += visited;
        worst = std::max(worst, std::fabs(got - naive[q]) / std::max(1e-3, std::fabs(naive[q])));
      }
      double tree_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
      *os << m << "," << beta << "," << naive_ms << "," << tree_ms << "," << worst << ","
          << static_cast<double>(visited_total) / queries.size() << "\n";
    }
  }
  return 0;
}

int cmd_verify(const std::string& filter, const Overrides& ov) {
  auto results = run_verification(filter, ov.workers);
  bool ok = report_verification(results, std::cout);
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regularized dipole sums: meshing, reconstruction, rendering, verification"};
  app.require_subcommand(1);
  Overrides ov;

  std::string cloud_path, out_path, scene_path, out_dir, checkpoint_path, spec_path, filter;
  std::vector<int> bench_sizes = {1000, 10000, 100000};
  std::vector<double> bench_betas;

  CLI::App* mesh = app.add_subcommand("mesh", "extract the zero level set of an oriented cloud");
  mesh->add_option("cloud", cloud_path, "input PLY")->required();
  mesh->add_option("out", out_path, "output OBJ")->required();
  add_common_flags(mesh, ov);

  CLI::App* rec = app.add_subcommand("reconstruct", "train a model against scene images");
  rec->add_option("scene", scene_path, "scene JSON")->required();
  rec->add_option("out", out_dir, "output directory")->required();
  add_common_flags(rec, ov);

  CLI::App* ren = app.add_subcommand("render", "render a checkpoint from a camera spec");
  ren->add_option("checkpoint", checkpoint_path, "model checkpoint")->required();
  ren->add_option("camera", spec_path, "camera spec JSON")->required();
  ren->add_option("out", out_path, "output PNG or PFM")->required();
  add_common_flags(ren, ov);

  CLI::App* bench = app.add_subcommand("bench", "naive vs accelerated query benchmark");
  bench->add_option("--sizes", bench_sizes, "point counts");
  bench->add_option("--betas", bench_betas, "opening thresholds");
  bench->add_option("--out", out_path, "CSV path (default stdout)");
  add_common_flags(bench, ov);

  CLI::App* ver = app.add_subcommand("verify", "run the oracle acceptance suite");
  ver->add_option("--filter", filter, "substring filter on check names");
  add_common_flags(ver, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (mesh->parsed()) return cmd_mesh(cloud_path, out_path, ov);
    if (rec->parsed()) return cmd_reconstruct(scene_path, out_dir, ov);
    if (ren->parsed()) return cmd_render(checkpoint_path, spec_path, out_path, ov);
    if (bench->parsed()) return cmd_bench(bench_sizes, bench_betas, out_path, ov);
    if (ver->parsed()) return cmd_verify(filter, ov);
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  }
  return 1;
}
