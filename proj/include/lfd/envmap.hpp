#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <vector>

#include "lfd/imagehdr.hpp"

namespace lfd {

using Vec3 = Eigen::Vector3d;

// World frame: +Y up, +Z forward (camera look direction), +X right.
// theta is the polar angle from +Y, phi the azimuth from +Z toward +X.
struct Spherical {
  double theta;
  double phi;
};

Spherical to_spherical(const Vec3& d);
Vec3 from_spherical(double theta, double phi);

// Continuous equirectangular coordinates; pixel centers sit at half-integers.
struct PixelCoord {
  double u;
  double v;
};

PixelCoord dir_to_pixel(const Vec3& d, int height);
// Inverse of dir_to_pixel for 0 <= u < 2H, 0 <= v <= H.
Vec3 pixel_to_dir(double u, double v, int height);
Vec3 texel_center_dir(int x, int y, int height);

// One bilinear tap: flat texel index (y * W + x) and its weight.
struct Tap {
  int index;
  double weight;
};

// Four taps that sample_bilinear blends; wraps in u and clamps in v.
std::array<Tap, 4> bilinear_taps(const Vec3& d, int height);

class EnvMap {
 public:
  EnvMap() = default;
  explicit EnvMap(int height, float fill = 0.0f);
  // Throws ValidationError unless width == 2 * height and radiance is valid.
  explicit EnvMap(HdrImage image);

  int height() const { return image_.height(); }
  int width() const { return image_.width(); }
  int texel_count() const { return width() * height(); }
  const HdrImage& image() const { return image_; }
  HdrImage& image() { return image_; }

  Rgb texel(int index) const;
  void set_texel(int index, const Rgb& v);

 private:
  HdrImage image_;
};

Rgb sample_bilinear(const EnvMap& env, const Vec3& d);

// Solid angle of each pixel in a row, for rows 0..H-1. Requires H >= 2.
std::vector<double> solid_angle_weights(int height);

EnvMap read_envmap(const std::filesystem::path& path);
void write_envmap(const EnvMap& env, const std::filesystem::path& path);

}  // namespace lfd
