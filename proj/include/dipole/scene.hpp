#pragma once

#include "dipole/optimizer.hpp"

namespace dipole {

// JSON scene description, version 1. Layout:
//   {
//     "version": 1,
//     "cloud": "points.ply",
//     "background": [r, g, b],                      // optional, default black
//     "lights": [{"position": [x,y,z], "intensity": [r,g,b]}],
//     "views": [{
//       "image": "view_000.png",                    // or .pfm
//       "camera": {
//         "position": [x,y,z],
//         "rotation": [r00,...,r22],                // row-major world-from-camera
//         "fx": f, "fy": f, "cx": c, "cy": c,
//         "width": w, "height": h
//       }
//     }]
//   }
// Relative paths resolve against the scene file's directory. Unknown keys
// are rejected with their field path.
struct SceneDescription {
  std::string cloud_path;
  Vec3 background = Vec3::Zero();
  std::vector<Light> lights;
  struct View {
    std::string image_path;
    Camera camera;
  };
  std::vector<View> views;
};

SceneDescription load_scene(const std::string& path);
void save_scene(const SceneDescription& scene, const std::string& path);

// Standalone render target: {"camera": {...}, "lights": [...]}, lights
// optional; the camera uses the scene schema above.
struct RenderSpec {
  Camera camera;
  std::vector<Light> lights;
};
RenderSpec load_render_spec(const std::string& path);
void save_render_spec(const RenderSpec& spec, const std::string& path);

// Reads every view image; resolutions must match the cameras.
std::vector<TrainView> load_views(const SceneDescription& scene);

// Whole-run configuration, version 1. Every training, rendering and model
// constant appears by name under "model" / "render" / "train" / "mesh", so a
// preset is a single file; omitted keys keep these defaults.
struct RunConfig {
  double lambda_scale = 20.0;
  double beta_bh = 2.0;
  double epsilon = 0.0;  // <= 0 picks 1.5x the mean kNN spacing
  bool desingularized = false;
  std::string head = "direct-rgb";  // or "tiny-mlp"
  std::vector<int> head_hidden = {64, 64};
  bool with_albedo = false;
  int k_appearance = 3;
  TrainConfig train;  // includes the render schedule and loss weights
  int mesh_resolution = 128;

  void validate() const;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

// Assembles a prepared model from a cloud and a config; `rng` seeds the
// tiny-mlp head weights when that variant is selected.
SceneModel make_model(OrientedPointCloud cloud, const RunConfig& config, Rng& rng);

}  // namespace dipole
