#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "lfd/envmap.hpp"
#include "lfd/errors.hpp"

using namespace lfd;
using std::numbers::pi;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

EnvMap random_env(int h, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  EnvMap env(h);
  for (float& v : env.image().data()) v = static_cast<float>(u(rng));
  return env;
}

}  // namespace

TEST_CASE("direction to pixel at poles and center") {
  const int h = 64, w = 128;
  CHECK(dir_to_pixel(Vec3(0, 1, 0), h).v == doctest::Approx(0.0));
  CHECK(dir_to_pixel(Vec3(0, -1, 0), h).v == doctest::Approx(h));
  const PixelCoord c = dir_to_pixel(Vec3(0, 0, 1), h);
  CHECK(c.u == doctest::Approx(w / 2.0));
  CHECK(c.v == doctest::Approx(h / 2.0));
  // +X sits a quarter turn from +Z toward larger u.
  CHECK(dir_to_pixel(Vec3(1, 0, 0), h).u == doctest::Approx(0.75 * w));
}

TEST_CASE("pixel to direction inverts at poles, center and random points") {
  const int h = 32;
  for (auto [u, v] : {std::pair{0.0, 0.0}, std::pair{32.0, 16.0}, std::pair{63.5, 32.0}, std::pair{17.3, 9.1}}) {
    const Vec3 d = pixel_to_dir(u, v, h);
    CHECK(d.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const PixelCoord p = dir_to_pixel(d, h);
    CHECK(p.v == doctest::Approx(v).epsilon(1e-9));
    if (v > 0.0 && v < h) CHECK(p.u == doctest::Approx(u).epsilon(1e-9));
  }
}

TEST_CASE("direction round trip for 10000 random unit vectors") {
  std::mt19937_64 rng(11);
  const int h = 128;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 d = random_unit(rng);
    const PixelCoord p = dir_to_pixel(d, h);
    worst = std::max(worst, (pixel_to_dir(p.u, p.v, h) - d).norm());
    const Vec3 back = pixel_to_dir(p.u, p.v, h);
    const PixelCoord q = dir_to_pixel(back, h);
    worst = std::max({worst, std::abs(q.u - p.u), std::abs(q.v - p.v)});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("spherical conversion matches the declared convention") {
  const Spherical s = to_spherical(Vec3(1, 0, 0));
  CHECK(s.theta == doctest::Approx(pi / 2));
  CHECK(s.phi == doctest::Approx(pi / 2));
  const Vec3 d = from_spherical(pi / 3, -pi / 4);
  CHECK(d.y() == doctest::Approx(0.5));
  CHECK(to_spherical(d).phi == doctest::Approx(-pi / 4));
}

TEST_CASE("bilinear sampling of a constant map") {
  EnvMap env(16, 2.5f);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Rgb c = sample_bilinear(env, random_unit(rng));
    for (double v : c) CHECK(v == doctest::Approx(2.5));
  }
}

TEST_CASE("bilinear sampling at a pixel center returns that pixel") {
  const EnvMap env = random_env(16, 3);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 32; x += 5) {
      const Rgb c = sample_bilinear(env, texel_center_dir(x, y, 16));
      const Rgb t = env.texel(y * 32 + x);
      for (int k = 0; k < 3; ++k) CHECK(c[k] == doctest::Approx(t[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("bilinear sampling wraps across the u seam and clamps in v") {
  const int h = 8, w = 16;
  EnvMap env(h);
  env.set_texel(3 * w + 0, {4, 4, 4});
  env.set_texel(3 * w + (w - 1), {2, 2, 2});
  // u = W - 0.25 lies a quarter pixel right of the last column's center.
  const Rgb c = sample_bilinear(env, pixel_to_dir(w - 0.25, 3.5, h));
  CHECK(c[0] == doctest::Approx(0.75 * 2 + 0.25 * 4));

  EnvMap top(h);
  for (int x = 0; x < w; ++x) top.set_texel(x, {1, 1, 1});
  CHECK(sample_bilinear(top, Vec3(0, 1, 0))[0] == doctest::Approx(1.0));
}

TEST_CASE("bilinear sampling is periodic in azimuth") {
  const EnvMap env = random_env(16, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0.05, pi - 0.05), ph(-pi, pi);
  for (int i = 0; i < 200; ++i) {
    const double theta = th(rng), phi = ph(rng);
    const Rgb a = sample_bilinear(env, from_spherical(theta, phi));
    const Rgb b = sample_bilinear(env, from_spherical(theta, phi + 2 * pi));
    for (int k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-9));
  }
}

TEST_CASE("bilinear taps carry unit weight") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    double sum = 0.0;
    for (const Tap& t : bilinear_taps(random_unit(rng), 16)) {
      CHECK(t.index >= 0);
      CHECK(t.index < 512);
      sum += t.weight;
    }
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("solid angle weights total 4 pi and peak at the equator") {
  for (int h : {8, 16, 32, 64, 128, 256, 512}) {
    const std::vector<double> w = solid_angle_weights(h);
    double total = 0.0;
    for (double v : w) total += v * 2 * h;
    CHECK(std::abs(total - 4 * pi) <= 1e-3 * 4 * pi);
    const auto top = std::max_element(w.begin(), w.end()) - w.begin();
    CHECK((top == h / 2 || top == h / 2 - 1));
  }
  CHECK_THROWS_AS(solid_angle_weights(1), ValidationError);
}

TEST_CASE("envmaps enforce W = 2H and survive a PFM round trip") {
  CHECK_THROWS_AS(EnvMap(HdrImage(10, 10)), ValidationError);
  test::TempDir dir("env");
  const EnvMap env = random_env(8, 7);
  write_envmap(env, dir / "e.pfm");
  const EnvMap back = read_envmap(dir / "e.pfm");
  REQUIRE(back.height() == 8);
  for (size_t i = 0; i < env.image().data().size(); ++i) CHECK(back.image().data()[i] == env.image().data()[i]);
  write_pfm(HdrImage(9, 8), dir / "bad.pfm");
  CHECK_THROWS_AS(read_envmap(dir / "bad.pfm"), ValidationError);
}
