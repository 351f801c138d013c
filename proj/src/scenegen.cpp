#include "lfd/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "lfd/errors.hpp"

namespace lfd {

namespace {

using std::numbers::pi;

const Vec3 kUp(0.0, 1.0, 0.0);

std::optional<double> ray_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
  const Vec3 oc = center - origin;
  const double b = dir.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  if (b - s > 0.0) return b - s;
  if (b + s > 0.0) return b + s;  // origin inside the sphere
  return std::nullopt;
}

}  // namespace

double TemporalProfile::multiplier(double t) const {
  switch (kind) {
    case Kind::kConstant:
      return 1.0;
    case Kind::kStep:
      return (t >= t0 && t < t1) ? 1.0 : 0.0;
    case Kind::kLinearFade:
      if (t <= t0) return 1.0;
      if (t >= t1) return 0.0;
      return (t1 - t) / (t1 - t0);
  }
  return 1.0;
}

void SceneSpec::validate() const {
  if (frames < 1) throw ValidationError("scene needs at least one frame");
  camera.validate();
  if (!poses.empty() && static_cast<int>(poses.size()) != frames) {
    throw ValidationError("scene poses must list one pose per frame");
  }
  bool lit = false;
  for (const Rgb& c : {ambient_top, ambient_bottom}) {
    for (double v : c) {
      if (!(v >= 0.0)) throw ValidationError("ambient radiance must be non-negative");
      lit = lit || v > 0.0;
    }
  }
  for (const Emitter& e : emitters) {
    if (!(e.radius > 0.0)) throw ValidationError("emitter radius must be positive");
    for (double v : e.radiance) {
      if (!(v >= 0.0)) throw ValidationError("emitter radiance must be non-negative");
      lit = lit || v > 0.0;
    }
    if (e.profile.kind != TemporalProfile::Kind::kConstant && !(e.profile.t1 > e.profile.t0)) {
      throw ValidationError("temporal profile needs t1 > t0");
    }
  }
  if (!lit) throw ValidationError("scene has no nonzero light source");
  for (int i = 0; i < 3; ++i) {
    if (!(room.max[i] > room.min[i])) throw ValidationError("room box must be non-empty");
  }
}

const Pose& SceneSpec::pose(int t) const {
  static const Pose kStatic{};
  if (poses.empty()) return kStatic;
  return poses.at(static_cast<size_t>(std::clamp(t, 1, frames) - 1));
}

Rgb ambient_radiance(const SceneSpec& scene, const Vec3& d) {
  const double s = 0.5 * (std::clamp(d.dot(kUp), -1.0, 1.0) + 1.0);
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = (1.0 - s) * scene.ambient_bottom[c] + s * scene.ambient_top[c];
  return out;
}

Rgb gt_radiance(const SceneSpec& scene, const Vec3& x, double t, const Vec3& d) {
  double nearest = std::numeric_limits<double>::infinity();
  const Emitter* hit = nullptr;
  for (const Emitter& e : scene.emitters) {
    const auto s = ray_sphere(x, d, e.center, e.radius);
    if (s && *s < nearest) {
      nearest = *s;
      hit = &e;
    }
  }
  if (hit == nullptr) return ambient_radiance(scene, d);
  const double m = hit->profile.multiplier(t);
  return {hit->radiance[0] * m, hit->radiance[1] * m, hit->radiance[2] * m};
}

EnvMap gt_envmap(const SceneSpec& scene, const Vec3& x, double t, int height) {
  EnvMap env(height);
  for (int y = 0; y < height; ++y) {
    for (int u = 0; u < 2 * height; ++u) {
      env.set_texel(y * 2 * height + u, gt_radiance(scene, x, t, texel_center_dir(u, y, height)));
    }
  }
  return env;
}

Rgb wall_radiance(const SceneSpec& scene, const Vec3& p, const Vec3& normal, double t) {
  // The sky is linear in d . up, so its cosine-weighted hemisphere integral is
  // pi * mean + (2 pi / 3) * slope * (n . up).
  Rgb irradiance;
  const double ndotup = normal.dot(kUp);
  for (int c = 0; c < 3; ++c) {
    const double mean = 0.5 * (scene.ambient_top[c] + scene.ambient_bottom[c]);
    const double slope = 0.5 * (scene.ambient_top[c] - scene.ambient_bottom[c]);
    irradiance[c] = pi * mean + 2.0 * pi / 3.0 * slope * ndotup;
  }
  // A uniform sphere subtending half-angle alpha above the horizon adds
  // pi * L * sin^2(alpha) * cos(theta); it also hides the sky behind it.
  for (const Emitter& e : scene.emitters) {
    const Vec3 to = e.center - p;
    const double dist = to.norm();
    if (dist <= e.radius) continue;
    const double cos_theta = normal.dot(to) / dist;
    if (cos_theta <= 0.0) continue;
    const double sin2 = (e.radius / dist) * (e.radius / dist);
    const double m = e.profile.multiplier(t);
    const Rgb behind = ambient_radiance(scene, to / dist);
    for (int c = 0; c < 3; ++c) irradiance[c] += pi * sin2 * cos_theta * (e.radiance[c] * m - behind[c]);
  }
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = std::max(0.0, scene.room.albedo[c] / pi * irradiance[c]);
  return out;
}

Background render_background(const SceneSpec& scene, int t) {
  const Camera& cam = scene.camera;
  const Pose& pose = scene.pose(t);
  Background bg{LdrImage(cam.width, cam.height), HdrImage(cam.width, cam.height),
                DepthMap(cam.width, cam.height, 1.0f)};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 v_cam = cam.ray(x + 0.5, y + 0.5).normalized();
      const Vec3 origin = pose.translation;
      const Vec3 dir = pose.dir_to_world(v_cam);

      // Exit point of the room box seen from inside.
      double exit = std::numeric_limits<double>::infinity();
      int axis = 0;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(dir[i]) < 1e-12) continue;
        const double bound = dir[i] > 0 ? scene.room.max[i] : scene.room.min[i];
        const double s = (bound - origin[i]) / dir[i];
        if (s > 0 && s < exit) {
          exit = s;
          axis = i;
        }
      }
      Rgb radiance;
      double dist = exit;
      const Emitter* hit = nullptr;
      for (const Emitter& e : scene.emitters) {
        const auto s = ray_sphere(origin, dir, e.center, e.radius);
        if (s && *s < dist) {
          dist = *s;
          hit = &e;
        }
      }
      if (hit != nullptr) {
        const double m = hit->profile.multiplier(t);
        radiance = {hit->radiance[0] * m, hit->radiance[1] * m, hit->radiance[2] * m};
      } else {
        Vec3 normal = Vec3::Zero();
        normal[axis] = dir[axis] > 0 ? -1.0 : 1.0;
        radiance = wall_radiance(scene, origin + exit * dir, normal, t);
      }
      bg.radiance.set_pixel(x, y, radiance);
      bg.depth.at(x, y) = static_cast<float>(dist * v_cam.z());
    }
  }
  auto src = bg.radiance.data();
  auto dst = bg.frame.data();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(tonemap_value(src[i], scene.background_ev, kDefaultGamma));
  }
  return bg;
}

}  // namespace lfd
