#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "lfd/envmap.hpp"
#include "lfd/imagehdr.hpp"

namespace lfd {

constexpr double kNearPlane = 0.01;

// Pinhole intrinsics. Camera space is x right, y down, z forward; pixel
// centers are at half-integer coordinates.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const;
  // Unnormalized ray direction through continuous pixel coordinates (u, v).
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
  Eigen::Vector2d project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }
};

// Maps camera space into the world (light-field) frame. The default pose flips
// y so that world +Y is up.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Vector3d(1.0, -1.0, 1.0).asDiagonal();
  Vec3 translation = Vec3::Zero();

  Vec3 point_to_world(const Vec3& p) const { return rotation * p + translation; }
  Vec3 dir_to_world(const Vec3& d) const { return rotation * d; }
  Vec3 dir_to_camera(const Vec3& d) const { return rotation.transpose() * d; }
};

struct Ball {
  Vec3 center;  // camera space, meters
  double radius = 0.0;

  void validate() const;
};

struct ProbeSet {
  std::vector<Ball> balls;
  Camera camera;
  DepthMap background_depth;
};

struct RayHit {
  double t;      // distance along the unit ray
  double depth;  // camera-space z of the hit
};

// Nearest intersection of a ray from the camera center with the ball.
std::optional<RayHit> intersect_ball(const Ball& ball, const Vec3& unit_dir);

// Mirror reflection of direction v about unit normal n.
inline Vec3 reflect(const Vec3& v, const Vec3& n) { return v - 2.0 * v.dot(n) * n; }

// Radius whose projected diameter is a quarter of the smaller image side.
double size_ball(const Camera& camera, const Vec3& center);

struct MaskAndDepth {
  Mask mask;
  DepthMap depth;
};

MaskAndDepth project_mask_and_depth(const ProbeSet& probes);

// Inclusive-exclusive pixel rectangle clipped to the image.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

PixelRect ball_bounds(const Ball& ball, const Camera& camera);

// Per-pixel record of which envmap texels a ball pixel reads and with what
// weight. Weights of a pixel sum to 1 over its hitting sub-samples; alpha is
// the covered fraction of sub-samples.
struct BallFootprint {
  PixelRect rect;
  int env_height = 0;
  std::vector<float> alpha;     // rect.width() * rect.height()
  std::vector<float> depth;     // nearest hit z, +inf when uncovered
  std::vector<uint32_t> offsets;  // CSR row pointers, size pixels + 1
  std::vector<Tap> taps;

  size_t pixel_count() const { return alpha.size(); }
};

struct FootprintOptions {
  int supersample = 4;
  const DepthMap* background_depth = nullptr;  // occludes ball pixels behind it
  Pose pose{};
};

BallFootprint trace_ball_footprint(const Ball& ball, const Camera& camera, int env_height,
                                   const FootprintOptions& options = {});

// Image-space patch of a rendered probe. Color is not premultiplied.
struct Sprite {
  PixelRect rect;
  std::vector<float> color;  // RGB
  std::vector<float> alpha;
  std::vector<float> depth;

  Rgb pixel(int i) const { return {color[3 * i], color[3 * i + 1], color[3 * i + 2]}; }
};

// Shades a footprint from per-texel radiance (flat RGB, texel-major).
Sprite shade_footprint(const BallFootprint& fp, std::span<const double> texel_rgb);
Sprite shade_footprint(const BallFootprint& fp, const EnvMap& env);

Sprite render_ball(const EnvMap& env, const Ball& ball, const Camera& camera, int supersample = 4,
                   const DepthMap* background_depth = nullptr, const Pose& pose = {});

Sprite tonemap_sprite(const Sprite& sprite, const ExposureValue& ev, double gamma = kDefaultGamma);

// Front-to-back "over" compositing, ordered per pixel by sprite depth.
LdrImage composite(const LdrImage& frame, std::span<const Sprite> sprites);
HdrImage composite(const HdrImage& frame, std::span<const Sprite> sprites);

// Sprite pixels outside the sprite rect are treated as uncovered.
struct UnwrapResult {
  EnvMap env;
  Mask valid;  // 2H x H
};

UnwrapResult unwrap_ball(const Sprite& sprite, const Ball& ball, const Camera& camera, int env_height,
                         const Pose& pose = {});

// Sprite rasterized into a full frame-sized RGB image (uncovered pixels 0)
// plus a coverage mask; used for writing sprites to disk.
HdrImage sprite_to_image(const Sprite& sprite, const Camera& camera);
Mask sprite_coverage(const Sprite& sprite, const Camera& camera);

}  // namespace lfd
