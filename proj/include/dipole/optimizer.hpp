#pragma once

#include "dipole/renderer.hpp"

namespace dipole {

struct LossWeights {
  double w_render = 1.0;
  double w_entropy = 0.01;
  double w_winding = 0.001;
  double w_normal = 0.01;

  void validate() const;
};

struct TrainConfig {
  int batch_rays = 4096;
  double lr_points = 1e-2;
  double lr_head = 3e-3;
  double lr_scalars = 1e-3;  // log lambda and log epsilon move gently
  int warmup_iters = 200;
  int total_iters = 1000;
  int grow_every = 500;
  int grow_rays = 256;
  double grow_distance_threshold = 0.0;  // <= 0 picks 2x mean kNN spacing
  std::uint64_t rng_seed = 0;
  bool shadow_rays = false;
  LossWeights weights;
  RenderConfig render;

  void validate() const;
};

// Linear warmup to 1, then cosine decay to 0 at total_iters.
double lr_schedule(int iter, const TrainConfig& config);

struct LossBreakdown {
  double render = 0, entropy = 0, winding = 0, normal = 0;
  double total() const { return render + entropy + winding + normal; }
};

// Loss terms for a batch of rendered rays against their reference colors.
// The render and entropy terms average over rays; the winding and normal
// regularizers sum over points.
LossBreakdown compute_losses(const SceneModel& model, std::span<const RayResult> rendered,
                             std::span<const Vec3> gt_colors, const LossWeights& weights);

// Decoupled first-moment/second-moment update, one state per parameter group.
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::int64_t t = 0;

  void step(std::span<double> params, std::span<const double> grads, double lr);
};

struct TrainView {
  Camera camera;
  Image image;
};

struct StepMetrics {
  int iter = 0;
  LossBreakdown loss;
  double lr_multiplier = 0;
  int grown_points = 0;
  bool rejected = false;  // non-finite loss, update skipped
};

class Trainer {
 public:
  Trainer(SceneModel& model, std::vector<TrainView> views, std::vector<Light> lights,
          TrainConfig config);

  // One full two-stage iteration: moment refresh, forward batch, backward
  // with adjoint queries, gradient flush, parameter update (positions and
  // areas stay fixed; normals are renormalized). Point growing runs every
  // grow_every iterations.
  StepMetrics step();

  int iteration() const { return iter_; }
  SceneModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }

  // Appends one CSV row per metrics entry; writes a header when the file is
  // fresh.
  static void append_metrics_csv(const std::string& path, const StepMetrics& metrics);

 private:
  SceneModel& model_;
  std::vector<TrainView> views_;
  std::vector<Light> lights_;
  TrainConfig config_;
  Rng rng_;
  int iter_ = 0;
  Adam adam_beta_, adam_alpha_, adam_normal_, adam_head_, adam_scalars_, adam_background_;

  int grow_points();
};

// Adds points at rendered first intersections that are farther than the
// threshold from every existing point; attributes averaged over neighbors,
// PCA normals, area weights recomputed, tree rebuilt. Returns points added
// (capped at 10% of the pre-growth count).
int point_growing(SceneModel& model, const TrainConfig& config, std::span<const TrainView> views,
                  Rng& rng);

// Versioned binary checkpoint: cloud (positions, normals, areas, moments,
// initial normals), head weights, lambda, epsilon, background, iteration.
void save_checkpoint(const SceneModel& model, int iter, const std::string& path);
struct Checkpoint {
  SceneModel model;
  int iter = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dipole
