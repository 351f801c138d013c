#include "lfd/config.hpp"

#include <fstream>
#include <set>

#include "lfd/errors.hpp"

namespace lfd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ObjectReader(const ObjectReader&) = delete;
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }
  std::string child(const std::string& key) const { return path_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(child(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(child(key) + ": expected a non-negative integer");
      out = v->get<uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(child(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, Vec3& out) {
    if (const json* v = find(key)) out = vec3(*v, child(key));
  }
  void get(const std::string& key, Rgb& out) {
    if (const json* v = find(key)) {
      const Vec3 c = vec3(*v, child(key));
      out = {c.x(), c.y(), c.z()};
    }
  }

  static Vec3 vec3(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(path + ": expected an array of 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(path + ": expected an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const json& require_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  return j;
}

Camera camera_at(const json& j, const std::string& path) {
  Camera c;
  {
    ObjectReader r(j, path);
    r.get("fx", c.fx);
    r.get("fy", c.fy);
    r.get("cx", c.cx);
    r.get("cy", c.cy);
    r.get("width", c.width);
    r.get("height", c.height);
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

Pose pose_at(const json& j, const std::string& path) {
  Pose p;
  ObjectReader r(j, path);
  if (const json* rot = r.find("rotation")) {
    const std::string rp = r.child("rotation");
    if (!rot->is_array() || rot->size() != 3) throw ConfigError(rp + ": expected 3 rows");
    for (int i = 0; i < 3; ++i) p.rotation.row(i) = ObjectReader::vec3((*rot)[i], rp).transpose();
  }
  r.get("translation", p.translation);
  return p;
}

TemporalProfile profile_at(const json& j, const std::string& path) {
  TemporalProfile p;
  ObjectReader r(j, path);
  std::string kind = "constant";
  r.get("kind", kind);
  if (kind == "constant") {
    p.kind = TemporalProfile::Kind::kConstant;
  } else if (kind == "step") {
    p.kind = TemporalProfile::Kind::kStep;
  } else if (kind == "linear_fade") {
    p.kind = TemporalProfile::Kind::kLinearFade;
  } else {
    throw ConfigError(r.child("kind") + ": expected constant, step or linear_fade");
  }
  r.get("t0", p.t0);
  r.get("t1", p.t1);
  return p;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

Camera parse_camera(const json& j) { return camera_at(j, "camera"); }

std::vector<Ball> parse_balls(const json& j) {
  const json& arr = j.is_object() && j.contains("balls") ? j.at("balls") : j;
  if (j.is_object()) ObjectReader(j, "balls-file").find("balls");
  require_array(arr, "balls");
  std::vector<Ball> balls;
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "balls[" + std::to_string(i) + "]";
    Ball b;
    {
      ObjectReader r(arr[i], path);
      r.get("center", b.center);
      r.get("radius", b.radius);
    }
    try {
      b.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(path + ": " + e.what());
    }
    balls.push_back(b);
  }
  return balls;
}

SceneSpec parse_scene(const json& j) {
  SceneSpec s;
  {
    ObjectReader r(j, "scene");
    if (const json* em = r.find("emitters")) {
      require_array(*em, r.child("emitters"));
      for (size_t i = 0; i < em->size(); ++i) {
        const std::string path = r.child("emitters") + "[" + std::to_string(i) + "]";
        Emitter e;
        ObjectReader er((*em)[i], path);
        er.get("center", e.center);
        er.get("radius", e.radius);
        er.get("radiance", e.radiance);
        if (const json* p = er.find("profile")) e.profile = profile_at(*p, er.child("profile"));
        s.emitters.push_back(e);
      }
    }
    r.get("ambient_top", s.ambient_top);
    r.get("ambient_bottom", s.ambient_bottom);
    if (const json* room = r.find("room")) {
      ObjectReader rr(*room, r.child("room"));
      rr.get("min", s.room.min);
      rr.get("max", s.room.max);
      rr.get("albedo", s.room.albedo);
    }
    if (const json* cam = r.find("camera")) s.camera = camera_at(*cam, r.child("camera"));
    if (const json* poses = r.find("poses")) {
      require_array(*poses, r.child("poses"));
      for (size_t i = 0; i < poses->size(); ++i) {
        s.poses.push_back(pose_at((*poses)[i], r.child("poses") + "[" + std::to_string(i) + "]"));
      }
    }
    r.get("frames", s.frames);
    r.get("background_ev", s.background_ev);
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  return s;
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  {
    ObjectReader r(j, "config");
    r.get("iterations", c.iterations);
    r.get("num_balls", c.num_balls);
    r.get("seed", c.seed);
    r.get("ev_min", c.ev_min);
    r.get("gamma", c.gamma);
    r.get("cfg_scale", c.cfg_scale);
    r.get("train_env_height", c.train_env_height);
    r.get("supersample", c.supersample);
    r.get("checkpoint_every", c.checkpoint_every);
    if (const json* v = r.find("tau_override")) {
      if (!v->is_number()) throw ConfigError(r.child("tau_override") + ": expected a number");
      c.tau_override = v->get<double>();
    }
    if (const json* v = r.find("loss")) {
      ObjectReader lr(*v, r.child("loss"));
      lr.get("l2", c.loss.l2);
      lr.get("perceptual", c.loss.perceptual);
    }
    if (const json* v = r.find("sampling")) {
      ObjectReader sr(*v, r.child("sampling"));
      sr.get("near_fraction", c.sampling.near_fraction);
      sr.get("far_fraction", c.sampling.far_fraction);
    }
    if (const json* v = r.find("adam")) {
      ObjectReader ar(*v, r.child("adam"));
      ar.get("lr", c.adam.lr);
      ar.get("lr_final", c.adam.lr_final);
      ar.get("beta1", c.adam.beta1);
      ar.get("beta2", c.adam.beta2);
      ar.get("eps", c.adam.eps);
    }
    if (const json* v = r.find("arch")) {
      ObjectReader ar(*v, r.child("arch"));
      ar.get("hidden_layers", c.arch.hidden_layers);
      ar.get("hidden_width", c.arch.hidden_width);
      ar.get("skip_layer", c.arch.skip_layer);
      ar.get("freqs_x", c.arch.freqs_x);
      ar.get("freqs_t", c.arch.freqs_t);
      ar.get("freqs_d", c.arch.freqs_d);
      ar.get("time_input", c.arch.time_input);
    }
    if (const json* v = r.find("oracle")) {
      ObjectReader orr(*v, r.child("oracle"));
      std::string kind = "synthetic";
      orr.get("kind", kind);
      if (kind == "synthetic") {
        c.oracle.kind = OracleConfig::Kind::kSynthetic;
      } else if (kind == "file") {
        c.oracle.kind = OracleConfig::Kind::kFile;
      } else {
        throw ConfigError(orr.child("kind") + ": expected synthetic or file");
      }
      orr.get("sigma", c.oracle.sigma);
      orr.get("env_height", c.oracle.env_height);
      orr.get("supersample", c.oracle.supersample);
      std::string dir;
      orr.get("exchange_dir", dir);
      if (!dir.empty()) c.oracle.exchange_dir = resolve(base_dir, dir);
      orr.get("timeout_s", c.oracle.timeout_s);
      orr.get("poll_interval_s", c.oracle.poll_interval_s);
    }
    const json* scene = r.find("scene");
    const json* scene_file = r.find("scene_file");
    if (scene && scene_file) throw ConfigError("config: give either scene or scene_file, not both");
    if (scene) c.scene = parse_scene(*scene);
    if (scene_file) {
      if (!scene_file->is_string()) throw ConfigError("config.scene_file: expected a string");
      c.scene = load_scene(resolve(base_dir, scene_file->get<std::string>()));
    }
    for (auto [key, out] : {std::pair{"frames", &c.frame_paths}, std::pair{"depths", &c.depth_paths}}) {
      if (const json* v = r.find(key)) {
        require_array(*v, r.child(key));
        for (const json& p : *v) {
          if (!p.is_string()) throw ConfigError(r.child(key) + ": expected file paths");
          out->push_back(resolve(base_dir, p.get<std::string>()));
        }
      }
    }
    if (const json* cam = r.find("camera")) c.camera = camera_at(*cam, r.child("camera"));
  }
  return c;
}

ProbeList parse_probe_list(const json& j) {
  ProbeList list;
  ObjectReader r(j, "probes-file");
  r.get("envmap_height", list.envmap_height);
  if (list.envmap_height < 2) throw ConfigError("probes-file.envmap_height must be >= 2");
  if (const json* v = r.find("probes")) {
    require_array(*v, r.child("probes"));
    for (size_t i = 0; i < v->size(); ++i) {
      ProbePoint p;
      ObjectReader pr((*v)[i], r.child("probes") + "[" + std::to_string(i) + "]");
      pr.get("x", p.x);
      pr.get("t", p.t);
      list.probes.push_back(p);
    }
  }
  return list;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SceneSpec load_scene(const fs::path& path) { return parse_scene(read_json(path)); }

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_json(path), path.parent_path()); }

ProbeList load_probe_list(const fs::path& path) { return parse_probe_list(read_json(path)); }

std::vector<Ball> load_balls(const fs::path& path) { return parse_balls(read_json(path)); }

Camera load_camera(const fs::path& path) { return parse_camera(read_json(path)); }

json camera_to_json(const Camera& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

}  // namespace lfd
