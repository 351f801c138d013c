#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "lfd/distill.hpp"
#include "lfd/probe.hpp"
#include "lfd/scenegen.hpp"

namespace lfd {

// Strict JSON readers: every key has a default and unknown keys throw
// ConfigError naming the offending path. Relative file paths resolve
// against base_dir.
Camera parse_camera(const nlohmann::json& j);
std::vector<Ball> parse_balls(const nlohmann::json& j);
SceneSpec parse_scene(const nlohmann::json& j);
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct ProbePoint {
  Vec3 x;  // world frame
  double t = 1.0;
};

struct ProbeList {
  int envmap_height = 128;
  std::vector<ProbePoint> probes;
};

ProbeList parse_probe_list(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);

SceneSpec load_scene(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);
ProbeList load_probe_list(const std::filesystem::path& path);
std::vector<Ball> load_balls(const std::filesystem::path& path);
Camera load_camera(const std::filesystem::path& path);

nlohmann::json camera_to_json(const Camera& camera);

}  // namespace lfd
