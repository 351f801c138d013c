#include "lfd/probe.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lfd/errors.hpp"

namespace lfd {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

bool occluded(const DepthMap* background, int x, int y, double depth) {
  return background != nullptr && !(depth < background->at(x, y));
}

// Range of x/z (or y/z) over a sphere seen from the origin, from the tangent
// lines of its projection onto the (lateral, z) plane.
std::pair<double, double> slope_range(double lateral, double z, double r) {
  const double dist = std::hypot(lateral, z);
  const double center = std::atan2(lateral, z);
  const double half = std::asin(std::min(1.0, r / dist));
  const double lo = center - half;
  const double hi = center + half;
  constexpr double kLimit = std::numbers::pi / 2 - 1e-6;
  return {std::tan(std::max(lo, -kLimit)), std::tan(std::min(hi, kLimit))};
}

}  // namespace

void Camera::validate() const {
  if (!(fx > 0 && fy > 0)) throw ValidationError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("camera dimensions must be positive");
  if (!(cx > 0 && cx < width && cy > 0 && cy < height)) {
    throw ValidationError("camera principal point must lie inside the image");
  }
}

void Ball::validate() const {
  if (!(radius > 0)) throw ValidationError("ball radius must be positive");
  if (!(center.z() - radius > kNearPlane)) throw ValidationError("ball crosses the near plane");
}

std::optional<RayHit> intersect_ball(const Ball& ball, const Vec3& unit_dir) {
  const double b = unit_dir.dot(ball.center);
  const double c = ball.center.squaredNorm() - ball.radius * ball.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double t = b - std::sqrt(disc);
  if (t <= 0.0) return std::nullopt;
  return RayHit{t, t * unit_dir.z()};
}

double size_ball(const Camera& camera, const Vec3& center) {
  if (!(center.z() > 0.0)) throw ValidationError("ball center must be in front of the camera");
  return (std::min(camera.width, camera.height) / 8.0) * center.z() / camera.fx;
}

MaskAndDepth project_mask_and_depth(const ProbeSet& probes) {
  const Camera& cam = probes.camera;
  MaskAndDepth out{Mask(cam.width, cam.height), probes.background_depth};
  if (out.depth.width() != cam.width || out.depth.height() != cam.height) {
    throw ValidationError("background depth does not match the camera");
  }
  for (const Ball& ball : probes.balls) {
    const PixelRect rect = ball_bounds(ball, cam);
    for (int y = rect.y0; y < rect.y1; ++y) {
      for (int x = rect.x0; x < rect.x1; ++x) {
        const Vec3 dir = cam.ray(x + 0.5, y + 0.5).normalized();
        const auto hit = intersect_ball(ball, dir);
        if (!hit || !(hit->depth < out.depth.at(x, y))) continue;
        out.mask.at(x, y) = 1;
        out.depth.at(x, y) = static_cast<float>(hit->depth);
      }
    }
  }
  return out;
}

PixelRect ball_bounds(const Ball& ball, const Camera& camera) {
  const auto [sx0, sx1] = slope_range(ball.center.x(), ball.center.z(), ball.radius);
  const auto [sy0, sy1] = slope_range(ball.center.y(), ball.center.z(), ball.radius);
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::floor(camera.fx * sx0 + camera.cx)) - 1);
  r.x1 = std::min(camera.width, static_cast<int>(std::ceil(camera.fx * sx1 + camera.cx)) + 1);
  r.y0 = std::max(0, static_cast<int>(std::floor(camera.fy * sy0 + camera.cy)) - 1);
  r.y1 = std::min(camera.height, static_cast<int>(std::ceil(camera.fy * sy1 + camera.cy)) + 1);
  if (r.empty()) r = PixelRect{};
  return r;
}

BallFootprint trace_ball_footprint(const Ball& ball, const Camera& camera, int env_height,
                                   const FootprintOptions& options) {
  if (options.supersample < 1) throw ValidationError("supersample must be >= 1");
  BallFootprint fp;
  fp.rect = ball_bounds(ball, camera);
  fp.env_height = env_height;
  const size_t n = static_cast<size_t>(fp.rect.width()) * fp.rect.height();
  fp.alpha.assign(n, 0.0f);
  fp.depth.assign(n, kInf);
  fp.offsets.assign(n + 1, 0);
  const int ss = options.supersample;
  const double inv_samples = 1.0 / (ss * ss);

  std::vector<Tap> pixel_taps;
  size_t i = 0;
  for (int y = fp.rect.y0; y < fp.rect.y1; ++y) {
    for (int x = fp.rect.x0; x < fp.rect.x1; ++x, ++i) {
      pixel_taps.clear();
      int hits = 0;
      double nearest = kInf;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Vec3 v = camera.ray(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss).normalized();
          const auto hit = intersect_ball(ball, v);
          if (!hit || occluded(options.background_depth, x, y, hit->depth)) continue;
          ++hits;
          nearest = std::min(nearest, hit->depth);
          const Vec3 normal = (hit->t * v - ball.center) / ball.radius;
          const Vec3 omega = options.pose.dir_to_world(reflect(v, normal));
          for (const Tap& t : bilinear_taps(omega, env_height)) pixel_taps.push_back(t);
        }
      }
      if (hits > 0) {
        const double scale = 1.0 / hits;
        for (Tap& t : pixel_taps) t.weight *= scale;
        fp.taps.insert(fp.taps.end(), pixel_taps.begin(), pixel_taps.end());
        fp.alpha[i] = static_cast<float>(hits * inv_samples);
        fp.depth[i] = static_cast<float>(nearest);
      }
      fp.offsets[i + 1] = static_cast<uint32_t>(fp.taps.size());
    }
  }
  return fp;
}

Sprite shade_footprint(const BallFootprint& fp, std::span<const double> texel_rgb) {
  Sprite s;
  s.rect = fp.rect;
  s.alpha = fp.alpha;
  s.depth = fp.depth;
  s.color.assign(fp.pixel_count() * 3, 0.0f);
  for (size_t i = 0; i < fp.pixel_count(); ++i) {
    double acc[3] = {0, 0, 0};
    for (uint32_t k = fp.offsets[i]; k < fp.offsets[i + 1]; ++k) {
      const Tap& t = fp.taps[k];
      for (int c = 0; c < 3; ++c) acc[c] += t.weight * texel_rgb[3 * static_cast<size_t>(t.index) + c];
    }
    for (int c = 0; c < 3; ++c) s.color[3 * i + c] = static_cast<float>(acc[c]);
  }
  return s;
}

Sprite shade_footprint(const BallFootprint& fp, const EnvMap& env) {
  if (env.height() != fp.env_height) throw ValidationError("envmap height does not match footprint");
  auto src = env.image().data();
  std::vector<double> texels(src.begin(), src.end());
  return shade_footprint(fp, texels);
}

Sprite render_ball(const EnvMap& env, const Ball& ball, const Camera& camera, int supersample,
                   const DepthMap* background_depth, const Pose& pose) {
  FootprintOptions opts;
  opts.supersample = supersample;
  opts.background_depth = background_depth;
  opts.pose = pose;
  return shade_footprint(trace_ball_footprint(ball, camera, env.height(), opts), env);
}

Sprite tonemap_sprite(const Sprite& sprite, const ExposureValue& ev, double gamma) {
  Sprite out = sprite;
  for (float& v : out.color) v = static_cast<float>(tonemap_value(v, ev.ev(), gamma));
  return out;
}

namespace {

template <typename Image>
Image composite_impl(const Image& frame, std::span<const Sprite> sprites) {
  Image out = frame;
  struct Layer {
    float depth;
    float alpha;
    const float* color;
  };
  std::vector<Layer> layers;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      layers.clear();
      for (const Sprite& s : sprites) {
        if (x < s.rect.x0 || x >= s.rect.x1 || y < s.rect.y0 || y >= s.rect.y1) continue;
        const size_t i = static_cast<size_t>(y - s.rect.y0) * s.rect.width() + (x - s.rect.x0);
        if (s.alpha[i] <= 0.0f) continue;
        layers.push_back({s.depth[i], s.alpha[i], &s.color[3 * i]});
      }
      if (layers.empty()) continue;
      std::stable_sort(layers.begin(), layers.end(), [](const Layer& a, const Layer& b) { return a.depth < b.depth; });
      double acc[3] = {0, 0, 0};
      double trans = 1.0;
      for (const Layer& l : layers) {
        for (int c = 0; c < 3; ++c) acc[c] += trans * l.alpha * l.color[c];
        trans *= 1.0 - l.alpha;
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c] + trans * frame.at(x, y, c));
    }
  }
  return out;
}

void check_sprites_fit(int width, int height, std::span<const Sprite> sprites) {
  for (const Sprite& s : sprites) {
    if (s.rect.x0 < 0 || s.rect.y0 < 0 || s.rect.x1 > width || s.rect.y1 > height) {
      throw ValidationError("sprite extends outside the frame");
    }
  }
}

}  // namespace

LdrImage composite(const LdrImage& frame, std::span<const Sprite> sprites) {
  check_sprites_fit(frame.width(), frame.height(), sprites);
  return composite_impl(frame, sprites);
}

HdrImage composite(const HdrImage& frame, std::span<const Sprite> sprites) {
  check_sprites_fit(frame.width(), frame.height(), sprites);
  return composite_impl(frame, sprites);
}

namespace {

// Angle between the reflected direction and the axis pointing from the ball
// back toward the camera, for a surface normal tilted by beta from that axis.
double reflected_angle(double beta, double dist, double radius) {
  // Plane coordinates: a = camera->center axis, e = perpendicular.
  const double na = -std::cos(beta), ne = std::sin(beta);
  const double pa = dist + radius * na, pe = radius * ne;
  const double len = std::hypot(pa, pe);
  const double va = pa / len, ve = pe / len;
  const double vn = va * na + ve * ne;
  const double wa = va - 2.0 * vn * na;
  return std::acos(std::clamp(-wa, -1.0, 1.0));
}

}  // namespace

UnwrapResult unwrap_ball(const Sprite& sprite, const Ball& ball, const Camera& camera, int env_height,
                         const Pose& pose) {
  UnwrapResult out{EnvMap(env_height), Mask(2 * env_height, env_height)};
  const double dist = ball.center.norm();
  const Vec3 axis = ball.center / dist;
  const double beta_max = std::acos(ball.radius / dist);
  const double psi_max = reflected_angle(beta_max, dist, ball.radius);
  const int width = 2 * env_height;

  auto fetch = [&](const Eigen::Vector2d& px, Rgb& color) {
    const double fx = px.x() - 0.5 - sprite.rect.x0;
    const double fy = px.y() - 0.5 - sprite.rect.y0;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double ax = fx - x0, ay = fy - y0;
    double acc[3] = {0, 0, 0};
    double wsum = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int sx = x0 + dx, sy = y0 + dy;
        if (sx < 0 || sy < 0 || sx >= sprite.rect.width() || sy >= sprite.rect.height()) continue;
        const size_t i = static_cast<size_t>(sy) * sprite.rect.width() + sx;
        const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay) * sprite.alpha[i];
        if (w <= 0.0) continue;
        wsum += w;
        for (int c = 0; c < 3; ++c) acc[c] += w * sprite.color[3 * i + c];
      }
    }
    if (wsum <= 1e-12) return false;
    for (int c = 0; c < 3; ++c) color[c] = acc[c] / wsum;
    return true;
  };

  for (int y = 0; y < env_height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 omega = pose.dir_to_camera(texel_center_dir(x, y, env_height));
      const double psi = std::acos(std::clamp(-omega.dot(axis), -1.0, 1.0));
      if (psi >= psi_max) continue;
      Vec3 perp = omega - omega.dot(axis) * axis;
      if (perp.norm() < 1e-12) {
        perp = axis.unitOrthogonal();
      } else {
        perp.normalize();
      }
      double lo = 0.0, hi = beta_max;
      while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        if (reflected_angle(mid, dist, ball.radius) < psi) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double beta = 0.5 * (lo + hi);
      const Vec3 normal = -std::cos(beta) * axis + std::sin(beta) * perp;
      const Vec3 point = ball.center + ball.radius * normal;
      Rgb color;
      if (!fetch(camera.project(point), color)) continue;
      const int idx = y * width + x;
      out.env.set_texel(idx, color);
      out.valid.at(x, y) = 1;
    }
  }
  return out;
}

HdrImage sprite_to_image(const Sprite& sprite, const Camera& camera) {
  HdrImage img(camera.width, camera.height);
  for (int y = sprite.rect.y0; y < sprite.rect.y1; ++y) {
    for (int x = sprite.rect.x0; x < sprite.rect.x1; ++x) {
      const size_t i = static_cast<size_t>(y - sprite.rect.y0) * sprite.rect.width() + (x - sprite.rect.x0);
      if (sprite.alpha[i] > 0.0f) img.set_pixel(x, y, sprite.pixel(static_cast<int>(i)));
    }
  }
  return img;
}

Mask sprite_coverage(const Sprite& sprite, const Camera& camera) {
  Mask m(camera.width, camera.height);
  for (int y = sprite.rect.y0; y < sprite.rect.y1; ++y) {
    for (int x = sprite.rect.x0; x < sprite.rect.x1; ++x) {
      const size_t i = static_cast<size_t>(y - sprite.rect.y0) * sprite.rect.width() + (x - sprite.rect.x0);
      m.at(x, y) = sprite.alpha[i] > 0.0f ? 1 : 0;
    }
  }
  return m;
}

}  // namespace lfd
