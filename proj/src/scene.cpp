#include "dipole/scene.hpp"

#include <filesystem>
#include <fstream>

#include "dipole/image.hpp"
#include "json.hpp"

namespace dipole {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  return j;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw DataError("scene/config: " + path + ": " + what);
}

const json& need(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(path + "." + key, "missing");
  return obj.at(key);
}

// strict schema: anything not in `allowed` is an error, so typos surface
// instead of silently keeping a default
void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) fail(path + "." + item.key(), "unknown key");
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

Vec3 get_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
  Vec3 v;
  for (int c = 0; c < 3; ++c) v[c] = get_number(j[c], path + "[" + std::to_string(c) + "]");
  return v;
}

template <typename T, typename Get>
void opt(const json& obj, const std::string& path, const char* key, T& dst, Get get) {
  if (obj.contains(key)) dst = get(obj.at(key), path + "." + key);
}

Camera parse_camera(const json& j, const std::string& path) {
  check_keys(j, path, {"position", "rotation", "fx", "fy", "cx", "cy", "width", "height"});
  Camera cam;
  cam.position = get_vec3(need(j, path, "position"), path + ".position");
  const json& rot = need(j, path, "rotation");
  if (!rot.is_array() || rot.size() != 9) fail(path + ".rotation", "expected 9 numbers, row-major");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      cam.orientation(r, c) = get_number(rot[3 * r + c], path + ".rotation");
  cam.fx = get_number(need(j, path, "fx"), path + ".fx");
  cam.fy = get_number(need(j, path, "fy"), path + ".fy");
  cam.cx = get_number(need(j, path, "cx"), path + ".cx");
  cam.cy = get_number(need(j, path, "cy"), path + ".cy");
  cam.width = get_int(need(j, path, "width"), path + ".width");
  cam.height = get_int(need(j, path, "height"), path + ".height");
  try {
    cam.validate();
  } catch (const DataError& e) {
    fail(path, e.what());
  }
  return cam;
}

json camera_json(const Camera& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.orientation(r, c));
  return {{"position", {cam.position.x(), cam.position.y(), cam.position.z()}},
          {"rotation", rot},
          {"fx", cam.fx},
          {"fy", cam.fy},
          {"cx", cam.cx},
          {"cy", cam.cy},
          {"width", cam.width},
          {"height", cam.height}};
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / fp).string();
}

}  // namespace

SceneDescription load_scene(const std::string& path) {
  json j = parse_file(path);
  check_keys(j, "scene", {"version", "cloud", "background", "lights", "views"});
  int version = get_int(need(j, "scene", "version"), "scene.version");
  if (version != 1) fail("scene.version", "unsupported version " + std::to_string(version));
  std::string dir = std::filesystem::path(path).parent_path().string();
  SceneDescription scene;
  scene.cloud_path = resolve(dir, get_string(need(j, "scene", "cloud"), "scene.cloud"));
  opt(j, "scene", "background", scene.background, get_vec3);
  if (j.contains("lights")) {
    const json& lights = j.at("lights");
    if (!lights.is_array()) fail("scene.lights", "expected an array");
    for (std::size_t i = 0; i < lights.size(); ++i) {
      std::string lp = "scene.lights[" + std::to_string(i) + "]";
      check_keys(lights[i], lp, {"position", "intensity"});
      Light l;
      l.position = get_vec3(need(lights[i], lp, "position"), lp + ".position");
      l.intensity = get_vec3(need(lights[i], lp, "intensity"), lp + ".intensity");
      scene.lights.push_back(l);
    }
  }
  const json& views = need(j, "scene", "views");
  if (!views.is_array() || views.empty()) fail("scene.views", "expected a nonempty array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    std::string vp = "scene.views[" + std::to_string(i) + "]";
    check_keys(views[i], vp, {"image", "camera"});
    SceneDescription::View view;
    view.image_path = resolve(dir, get_string(need(views[i], vp, "image"), vp + ".image"));
    view.camera = parse_camera(need(views[i], vp, "camera"), vp + ".camera");
    scene.views.push_back(std::move(view));
  }
  return scene;
}

void save_scene(const SceneDescription& scene, const std::string& path) {
  json j;
  j["version"] = 1;
  j["cloud"] = scene.cloud_path;
  j["background"] = {scene.background.x(), scene.background.y(), scene.background.z()};
  j["lights"] = json::array();
  for (const Light& l : scene.lights)
    j["lights"].push_back({{"position", {l.position.x(), l.position.y(), l.position.z()}},
                           {"intensity", {l.intensity.x(), l.intensity.y(), l.intensity.z()}}});
  j["views"] = json::array();
  for (const auto& v : scene.views)
    j["views"].push_back({{"image", v.image_path}, {"camera", camera_json(v.camera)}});
  std::ofstream out(path);
  if (!out) throw DataError("save_scene: cannot open " + path);
  out << j.dump(2) << "\n";
}

RenderSpec load_render_spec(const std::string& path) {
  json j = parse_file(path);
  check_keys(j, "spec", {"camera", "lights"});
  RenderSpec spec;
  spec.camera = parse_camera(need(j, "spec", "camera"), "spec.camera");
  if (j.contains("lights")) {
    const json& lights = j.at("lights");
    if (!lights.is_array()) fail("spec.lights", "expected an array");
    for (std::size_t i = 0; i < lights.size(); ++i) {
      std::string lp = "spec.lights[" + std::to_string(i) + "]";
      check_keys(lights[i], lp, {"position", "intensity"});
      Light l;
      l.position = get_vec3(need(lights[i], lp, "position"), lp + ".position");
      l.intensity = get_vec3(need(lights[i], lp, "intensity"), lp + ".intensity");
      spec.lights.push_back(l);
    }
  }
  return spec;
}

void save_render_spec(const RenderSpec& spec, const std::string& path) {
  json j;
  j["camera"] = camera_json(spec.camera);
  j["lights"] = json::array();
  for (const Light& l : spec.lights)
    j["lights"].push_back({{"position", {l.position.x(), l.position.y(), l.position.z()}},
                           {"intensity", {l.intensity.x(), l.intensity.y(), l.intensity.z()}}});
  std::ofstream out(path);
  if (!out) throw DataError("save_render_spec: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::vector<TrainView> load_views(const SceneDescription& scene) {
  std::vector<TrainView> views;
  for (const auto& v : scene.views) {
    TrainView tv;
    tv.camera = v.camera;
    tv.image = v.image_path.size() > 4 && v.image_path.ends_with(".pfm") ? load_pfm(v.image_path)
                                                                         : load_png(v.image_path);
    if (tv.image.width != v.camera.width || tv.image.height != v.camera.height)
      throw DataError("load_views: " + v.image_path + " does not match its camera resolution");
    views.push_back(std::move(tv));
  }
  return views;
}

void RunConfig::validate() const {
  if (lambda_scale <= 0) throw DataError("config: model.lambda_scale must be positive");
  if (beta_bh < 1) throw DataError("config: model.beta_bh must be >= 1");
  if (head != "direct-rgb" && head != "tiny-mlp")
    throw DataError("config: model.head must be direct-rgb or tiny-mlp");
  if (k_appearance < 0) throw DataError("config: model.k_appearance must be nonnegative");
  if (mesh_resolution < 2) throw DataError("config: mesh.resolution must be >= 2");
  train.validate();
}

RunConfig load_run_config(const std::string& path) {
  json j = parse_file(path);
  check_keys(j, "config", {"version", "model", "render", "train", "mesh"});
  if (j.contains("version") && get_int(j.at("version"), "config.version") != 1)
    fail("config.version", "unsupported version");
  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "config.model",
               {"lambda_scale", "beta_bh", "epsilon", "desingularized", "head", "head_hidden",
                "with_albedo", "k_appearance"});
    opt(m, "config.model", "lambda_scale", cfg.lambda_scale, get_number);
    opt(m, "config.model", "beta_bh", cfg.beta_bh, get_number);
    opt(m, "config.model", "epsilon", cfg.epsilon, get_number);
    opt(m, "config.model", "desingularized", cfg.desingularized, get_bool);
    opt(m, "config.model", "head", cfg.head, get_string);
    opt(m, "config.model", "with_albedo", cfg.with_albedo, get_bool);
    opt(m, "config.model", "k_appearance", cfg.k_appearance, get_int);
    if (m.contains("head_hidden")) {
      const json& hh = m.at("head_hidden");
      if (!hh.is_array()) fail("config.model.head_hidden", "expected an array");
      cfg.head_hidden.clear();
      for (std::size_t i = 0; i < hh.size(); ++i)
        cfg.head_hidden.push_back(get_int(hh[i], "config.model.head_hidden"));
    }
  }
  if (j.contains("render")) {
    const json& r = j.at("render");
    check_keys(r, "config.render",
               {"t_near", "t_far", "probe_count", "sparse_before", "dense_at", "sparse_after",
                "uniform_count", "shadow_samples"});
    RenderConfig& rc = cfg.train.render;
    opt(r, "config.render", "t_near", rc.t_near, get_number);
    opt(r, "config.render", "t_far", rc.t_far, get_number);
    opt(r, "config.render", "probe_count", rc.probe_count, get_int);
    opt(r, "config.render", "sparse_before", rc.sparse_before, get_int);
    opt(r, "config.render", "dense_at", rc.dense_at, get_int);
    opt(r, "config.render", "sparse_after", rc.sparse_after, get_int);
    opt(r, "config.render", "uniform_count", rc.uniform_count, get_int);
    opt(r, "config.render", "shadow_samples", rc.shadow_samples, get_int);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "config.train",
               {"batch_rays", "lr_points", "lr_head", "lr_scalars", "warmup_iters", "total_iters",
                "grow_every", "grow_rays", "grow_distance_threshold", "rng_seed", "shadow_rays",
                "weights"});
    TrainConfig& tc = cfg.train;
    opt(t, "config.train", "batch_rays", tc.batch_rays, get_int);
    opt(t, "config.train", "lr_points", tc.lr_points, get_number);
    opt(t, "config.train", "lr_head", tc.lr_head, get_number);
    opt(t, "config.train", "lr_scalars", tc.lr_scalars, get_number);
    opt(t, "config.train", "warmup_iters", tc.warmup_iters, get_int);
    opt(t, "config.train", "total_iters", tc.total_iters, get_int);
    opt(t, "config.train", "grow_every", tc.grow_every, get_int);
    opt(t, "config.train", "grow_rays", tc.grow_rays, get_int);
    opt(t, "config.train", "grow_distance_threshold", tc.grow_distance_threshold, get_number);
    opt(t, "config.train", "shadow_rays", tc.shadow_rays, get_bool);
    if (t.contains("rng_seed")) tc.rng_seed = get_int(t.at("rng_seed"), "config.train.rng_seed");
    if (t.contains("weights")) {
      const json& w = t.at("weights");
      check_keys(w, "config.train.weights", {"w_render", "w_entropy", "w_winding", "w_normal"});
      opt(w, "config.train.weights", "w_render", tc.weights.w_render, get_number);
      opt(w, "config.train.weights", "w_entropy", tc.weights.w_entropy, get_number);
      opt(w, "config.train.weights", "w_winding", tc.weights.w_winding, get_number);
      opt(w, "config.train.weights", "w_normal", tc.weights.w_normal, get_number);
    }
  }
  if (j.contains("mesh")) {
    const json& m = j.at("mesh");
    check_keys(m, "config.mesh", {"resolution"});
    opt(m, "config.mesh", "resolution", cfg.mesh_resolution, get_int);
  }
  cfg.validate();
  return cfg;
}

void save_run_config(const RunConfig& config, const std::string& path) {
  config.validate();
  const RenderConfig& rc = config.train.render;
  const TrainConfig& tc = config.train;
  json j = {
      {"version", 1},
      {"model",
       {{"lambda_scale", config.lambda_scale},
        {"beta_bh", config.beta_bh},
        {"epsilon", config.epsilon},
        {"desingularized", config.desingularized},
        {"head", config.head},
        {"head_hidden", config.head_hidden},
        {"with_albedo", config.with_albedo},
        {"k_appearance", config.k_appearance}}},
      {"render",
       {{"t_near", rc.t_near},
        {"t_far", rc.t_far},
        {"probe_count", rc.probe_count},
        {"sparse_before", rc.sparse_before},
        {"dense_at", rc.dense_at},
        {"sparse_after", rc.sparse_after},
        {"uniform_count", rc.uniform_count},
        {"shadow_samples", rc.shadow_samples}}},
      {"train",
       {{"batch_rays", tc.batch_rays},
        {"lr_points", tc.lr_points},
        {"lr_head", tc.lr_head},
        {"lr_scalars", tc.lr_scalars},
        {"warmup_iters", tc.warmup_iters},
        {"total_iters", tc.total_iters},
        {"grow_every", tc.grow_every},
        {"grow_rays", tc.grow_rays},
        {"grow_distance_threshold", tc.grow_distance_threshold},
        {"rng_seed", tc.rng_seed},
        {"shadow_rays", tc.shadow_rays},
        {"weights",
         {{"w_render", tc.weights.w_render},
          {"w_entropy", tc.weights.w_entropy},
          {"w_winding", tc.weights.w_winding},
          {"w_normal", tc.weights.w_normal}}}}},
      {"mesh", {{"resolution", config.mesh_resolution}}}};
  std::ofstream out(path);
  if (!out) throw DataError("save_run_config: cannot open " + path);
  out << j.dump(2) << "\n";
}

SceneModel make_model(OrientedPointCloud cloud, const RunConfig& config, Rng& rng) {
  config.validate();
  SceneModel model;
  model.cloud = std::move(cloud);
  model.cloud.k_appearance = config.k_appearance;
  for (auto& p : model.cloud.points) p.appearance_moments.resize(config.k_appearance, 0.0);
  model.lambda_scale = config.lambda_scale;
  model.beta_bh = config.beta_bh;
  model.kernel.epsilon = config.epsilon;
  model.kernel.desingularized = config.desingularized;
  if (config.desingularized && config.epsilon > 0) model.kernel.desing_delta = config.epsilon;
  model.head.variant = config.head == "tiny-mlp" ? HeadVariant::TinyMlp : HeadVariant::DirectRgb;
  model.head.with_albedo = config.with_albedo;
  model.prepare();
  if (model.head.variant == HeadVariant::TinyMlp) model.head.init_mlp(config.head_hidden, rng);
  return model;
}

}  // namespace dipole
