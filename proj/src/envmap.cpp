#include "lfd/envmap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lfd/errors.hpp"

namespace lfd {

using std::numbers::pi;

Spherical to_spherical(const Vec3& d) {
  const double theta = std::acos(std::clamp(d.y(), -1.0, 1.0));
  double phi = std::atan2(d.x(), d.z());
  if (phi >= pi) phi -= 2.0 * pi;
  return {theta, phi};
}

Vec3 from_spherical(double theta, double phi) {
  const double s = std::sin(theta);
  return {s * std::sin(phi), std::cos(theta), s * std::cos(phi)};
}

PixelCoord dir_to_pixel(const Vec3& d, int height) {
  const Spherical sp = to_spherical(d);
  const double width = 2.0 * height;
  double u = (sp.phi + pi) / (2.0 * pi) * width;
  if (u >= width) u -= width;
  return {u, sp.theta / pi * height};
}

Vec3 pixel_to_dir(double u, double v, int height) {
  const double width = 2.0 * height;
  return from_spherical(v / height * pi, u / width * 2.0 * pi - pi);
}

Vec3 texel_center_dir(int x, int y, int height) { return pixel_to_dir(x + 0.5, y + 0.5, height); }

std::array<Tap, 4> bilinear_taps(const Vec3& d, int height) {
  const int width = 2 * height;
  const PixelCoord p = dir_to_pixel(d, height);
  const double fx = p.u - 0.5;
  const double fy = p.v - 0.5;
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double ax = fx - x0f;
  const double ay = fy - y0f;
  int x0 = static_cast<int>(x0f) % width;
  if (x0 < 0) x0 += width;
  const int x1 = (x0 + 1) % width;
  const int y0 = std::clamp(static_cast<int>(y0f), 0, height - 1);
  const int y1 = std::clamp(static_cast<int>(y0f) + 1, 0, height - 1);
  return {Tap{y0 * width + x0, (1 - ax) * (1 - ay)}, Tap{y0 * width + x1, ax * (1 - ay)},
          Tap{y1 * width + x0, (1 - ax) * ay}, Tap{y1 * width + x1, ax * ay}};
}

EnvMap::EnvMap(int height, float fill) : image_(2 * height, height, fill) {
  if (height < 1) throw ValidationError("envmap height must be positive");
}

EnvMap::EnvMap(HdrImage image) : image_(std::move(image)) {
  if (image_.width() != 2 * image_.height() || image_.height() < 1) {
    throw ValidationError("envmap must satisfy width == 2 * height, got " + std::to_string(image_.width()) + "x" +
                          std::to_string(image_.height()));
  }
  image_.validate();
}

Rgb EnvMap::texel(int index) const {
  auto d = image_.data();
  const size_t i = static_cast<size_t>(index) * 3;
  return {d[i], d[i + 1], d[i + 2]};
}

void EnvMap::set_texel(int index, const Rgb& v) {
  auto d = image_.data();
  const size_t i = static_cast<size_t>(index) * 3;
  for (int c = 0; c < 3; ++c) d[i + c] = static_cast<float>(v[c]);
}

Rgb sample_bilinear(const EnvMap& env, const Vec3& d) {
  Rgb out{0, 0, 0};
  for (const Tap& t : bilinear_taps(d, env.height())) {
    const Rgb c = env.texel(t.index);
    for (int k = 0; k < 3; ++k) out[k] += t.weight * c[k];
  }
  return out;
}

std::vector<double> solid_angle_weights(int height) {
  if (height < 2) throw ValidationError("solid_angle_weights requires H >= 2");
  const double dphi = 2.0 * pi / (2.0 * height);
  std::vector<double> w(height);
  for (int y = 0; y < height; ++y) {
    const double t0 = pi * y / height;
    const double t1 = pi * (y + 1) / height;
    w[y] = (std::cos(t0) - std::cos(t1)) * dphi;
  }
  return w;
}

EnvMap read_envmap(const std::filesystem::path& path) { return EnvMap(read_pfm(path)); }

void write_envmap(const EnvMap& env, const std::filesystem::path& path) { write_pfm(env.image(), path); }

}  // namespace lfd
