#pragma once

#include <vector>

#include "lfd/envmap.hpp"
#include "lfd/imagehdr.hpp"
#include "lfd/probe.hpp"

namespace lfd {

struct TemporalProfile {
  enum class Kind { kConstant, kStep, kLinearFade };
  Kind kind = Kind::kConstant;
  double t0 = 0.0;
  double t1 = 0.0;

  // Multiplier in [0, 1]. kStep is on for t0 <= t < t1; kLinearFade ramps
  // from 1 at t0 down to 0 at t1.
  double multiplier(double t) const;
};

struct Emitter {
  Vec3 center;  // world frame
  double radius = 0.1;
  Rgb radiance{1, 1, 1};
  TemporalProfile profile;
};

// Axis-aligned room in world coordinates with Lambertian walls.
struct Room {
  Vec3 min{-3, -1.5, -3};
  Vec3 max{3, 1.5, 6};
  Rgb albedo{0.6, 0.6, 0.6};
};

struct SceneSpec {
  std::vector<Emitter> emitters;
  Rgb ambient_top{0.5, 0.5, 0.5};
  Rgb ambient_bottom{0.2, 0.2, 0.2};
  Room room;
  Camera camera;
  std::vector<Pose> poses;  // one per frame, or empty for a static camera
  int frames = 1;
  double background_ev = 0.0;

  void validate() const;
  const Pose& pose(int t) const;
};

// Sky radiance blended between bottom and top colors by d . up.
Rgb ambient_radiance(const SceneSpec& scene, const Vec3& d);

// Radiance arriving at x from direction d at frame t.
Rgb gt_radiance(const SceneSpec& scene, const Vec3& x, double t, const Vec3& d);

EnvMap gt_envmap(const SceneSpec& scene, const Vec3& x, double t, int height);

// Irradiance-based outgoing radiance of a Lambertian surface point (world
// frame), direct light from the emitters and the ambient sky only.
Rgb wall_radiance(const SceneSpec& scene, const Vec3& p, const Vec3& normal, double t);

struct Background {
  LdrImage frame;
  HdrImage radiance;
  DepthMap depth;
};

Background render_background(const SceneSpec& scene, int t);

}  // namespace lfd
