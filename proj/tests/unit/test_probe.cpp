#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "lfd/errors.hpp"
#include "lfd/probe.hpp"

using namespace lfd;
using std::numbers::pi;

namespace {

Camera square_camera(int size, double fx) { return {fx, fx, size / 2.0, size / 2.0, size, size}; }

DepthMap far_wall(const Camera& cam, float depth = 100.0f) { return DepthMap(cam.width, cam.height, depth); }

// Independent silhouette test: the pixel-center ray lies inside the tangent
// cone of the sphere.
bool inside_silhouette(const Camera& cam, const Ball& b, int x, int y) {
  const Vec3 v = cam.ray(x + 0.5, y + 0.5).normalized();
  const double dist = b.center.norm();
  return std::acos(std::clamp(v.dot(b.center / dist), -1.0, 1.0)) < std::asin(b.radius / dist);
}

double front_depth(const Camera& cam, const Ball& b, int x, int y) {
  const Vec3 v = cam.ray(x + 0.5, y + 0.5).normalized();
  const double along = v.dot(b.center);
  const double off2 = b.center.squaredNorm() - along * along;
  return (along - std::sqrt(b.radius * b.radius - off2)) * v.z();
}

}  // namespace

TEST_CASE("size_ball follows the quarter-image rule") {
  const Camera cam = square_camera(512, 512);
  CHECK(size_ball(cam, Vec3(0, 0, 2)) == doctest::Approx(0.25));
  CHECK(size_ball(cam, Vec3(0.3, -0.1, 4)) == doctest::Approx(2 * size_ball(cam, Vec3(0.3, -0.1, 2))));
  CHECK_THROWS_AS(size_ball(cam, Vec3(0, 0, 0)), ValidationError);
  CHECK_THROWS_AS(size_ball(cam, Vec3(0, 0, -1)), ValidationError);
}

TEST_CASE("ball and camera validation") {
  CHECK_THROWS_AS((Ball{Vec3(0, 0, 0.1), 0.095}).validate(), ValidationError);
  CHECK_THROWS_AS((Ball{Vec3(0, 0, 1), 0.0}).validate(), ValidationError);
  CHECK_NOTHROW((Ball{Vec3(0, 0, 1), 0.5}).validate());
  CHECK_THROWS_AS((Camera{500, 500, 0, 10, 20, 20}).validate(), ValidationError);
}

TEST_CASE("reflection is an involution") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = Vec3(g(rng), g(rng), g(rng)).normalized();
    const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
    CHECK((reflect(reflect(w, n), n) - w).norm() < 1e-12);
  }
}

TEST_CASE("mask and depth without balls equal the background") {
  const Camera cam = square_camera(32, 32);
  const ProbeSet set{{}, cam, far_wall(cam, 3.0f)};
  const MaskAndDepth md = project_mask_and_depth(set);
  CHECK(md.mask.count() == 0);
  for (float d : md.depth.data()) CHECK(d == 3.0f);
}

TEST_CASE("on-axis ball projects to a disc of radius about 64 px") {
  const Camera cam = square_camera(512, 512);
  const ProbeSet set{{Ball{Vec3(0, 0, 2), 0.25}}, cam, far_wall(cam)};
  const MaskAndDepth md = project_mask_and_depth(set);
  const double radius = std::sqrt(md.mask.count() / pi);
  // Exact silhouette radius: fx * tan(asin(r / z)).
  const double analytic = 512 * std::tan(std::asin(0.125));
  CHECK(std::abs(radius - analytic) < 1.0);
  CHECK(std::abs(radius - 64.0) < 1.0);
  double sx = 0, sy = 0;
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 512; ++x) {
      if (md.mask.at(x, y)) {
        sx += x + 0.5;
        sy += y + 0.5;
      }
    }
  }
  CHECK(sx / md.mask.count() == doctest::Approx(256.0).epsilon(1e-3));
  CHECK(sy / md.mask.count() == doctest::Approx(256.0).epsilon(1e-3));
  CHECK(md.depth.at(256, 256) == doctest::Approx(1.75).epsilon(1e-4));
}

TEST_CASE("ball behind a wall contributes nothing") {
  const Camera cam = square_camera(64, 64);
  const ProbeSet set{{Ball{Vec3(0, 0, 5), 1.0}}, cam, far_wall(cam, 2.0f)};
  CHECK(project_mask_and_depth(set).mask.count() == 0);
  const Sprite s = render_ball(EnvMap(8, 1.0f), set.balls[0], cam, 2, &set.background_depth);
  for (float a : s.alpha) CHECK(a == 0.0f);
}

TEST_CASE("mask is the union of ball discs minus occluded pixels") {
  const Camera cam = square_camera(256, 220);
  DepthMap bg(256, 256, 6.0f);
  // A slab closer than some of the balls on the right half.
  for (int y = 0; y < 256; ++y) {
    for (int x = 160; x < 256; ++x) bg.at(x, y) = 2.5f;
  }
  std::vector<Ball> balls{{Vec3(-0.4, 0.1, 2.0), 0.3}, {Vec3(0.7, -0.2, 3.0), 0.5},
                          {Vec3(-0.2, 0.2, 2.6), 0.4}, {Vec3(0.9, 0.6, 4.0), 0.6}};
  const ProbeSet set{balls, cam, bg};
  const MaskAndDepth md = project_mask_and_depth(set);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      bool expected = false;
      double depth = bg.at(x, y);
      for (const Ball& b : balls) {
        if (!inside_silhouette(cam, b, x, y)) continue;
        const double z = front_depth(cam, b, x, y);
        if (z < bg.at(x, y)) {
          expected = true;
          depth = std::min(depth, z);
        }
      }
      CHECK(static_cast<bool>(md.mask.at(x, y)) == expected);
      CHECK(md.depth.at(x, y) == doctest::Approx(depth).epsilon(1e-5));
    }
  }
}

TEST_CASE("constant env renders a constant ball") {
  const Camera cam = square_camera(64, 64);
  const Ball ball{Vec3(0.1, 0.0, 2.0), 0.4};
  const Sprite s = render_ball(EnvMap(16, 3.0f), ball, cam, 4);
  int covered = 0;
  for (size_t i = 0; i < s.alpha.size(); ++i) {
    CHECK(s.alpha[i] >= 0.0f);
    CHECK(s.alpha[i] <= 1.0f);
    if (s.alpha[i] <= 0.0f) continue;
    ++covered;
    for (int c = 0; c < 3; ++c) CHECK(s.color[3 * i + c] == doctest::Approx(3.0).epsilon(1e-6));
  }
  CHECK(covered > 0);
}

TEST_CASE("center pixel of an on-axis ball sees the -Z direction") {
  const Camera cam = square_camera(65, 65);
  const Ball ball{Vec3(0, 0, 2.0), 0.5};
  // Smooth env: radiance 2 + d.z, which is 1 toward -Z.
  EnvMap env(64);
  for (int i = 0; i < env.texel_count(); ++i) {
    const double v = 2.0 + texel_center_dir(i % 128, i / 128, 64).z();
    env.set_texel(i, {v, v, v});
  }
  const Sprite s = render_ball(env, ball, cam, 4);
  const int cx = 32 - s.rect.x0, cy = 32 - s.rect.y0;
  const Rgb c = s.pixel(cy * s.rect.width() + cx);
  CHECK(c[0] == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("highlights of a four-light env land where the reflection equation puts them") {
  const Camera cam = square_camera(256, 256);
  const Ball ball{Vec3(0.0, 0.0, 2.0), 0.8};
  const int h = 64;
  const std::vector<Vec3> lights{Vec3(0.5, 0.3, -0.8).normalized(), Vec3(-0.6, -0.2, -0.75).normalized(),
                                 Vec3(0.1, -0.7, -0.7).normalized(), Vec3(-0.3, 0.65, -0.7).normalized()};
  EnvMap env(h);
  std::vector<Vec3> texel_dirs;
  for (const Vec3& l : lights) {
    const PixelCoord p = dir_to_pixel(l, h);
    const int tx = static_cast<int>(p.u), ty = static_cast<int>(p.v);
    env.set_texel(ty * 2 * h + tx, {100, 100, 100});
    texel_dirs.push_back(texel_center_dir(tx, ty, h));
  }
  const Sprite s = render_ball(env, ball, cam, 4);
  const Pose pose;

  // Oracle: Gauss-Newton on the pixel position p so that the mirror direction
  // at p equals the light direction, with a numeric Jacobian.
  auto mirror_dir = [&](const Eigen::Vector2d& p) {
    const Vec3 v = cam.ray(p.x(), p.y()).normalized();
    const double along = v.dot(ball.center);
    const double t = along - std::sqrt(ball.radius * ball.radius - (ball.center.squaredNorm() - along * along));
    const Vec3 n = (t * v - ball.center) / ball.radius;
    return Vec3(pose.dir_to_world(v - 2 * v.dot(n) * n));
  };
  for (const Vec3& target : texel_dirs) {
    Eigen::Vector2d p(128, 128);
    for (int it = 0; it < 50; ++it) {
      const Vec3 r = mirror_dir(p) - target;
      Eigen::Matrix<double, 3, 2> jac;
      for (int k = 0; k < 2; ++k) {
        Eigen::Vector2d dp = Eigen::Vector2d::Zero();
        dp[k] = 1e-4;
        jac.col(k) = (mirror_dir(p + dp) - mirror_dir(p - dp)) / 2e-4;
      }
      p -= (jac.transpose() * jac).ldlt().solve(jac.transpose() * r);
    }
    REQUIRE((mirror_dir(p) - target).norm() < 1e-9);

    // Intensity-weighted centroid of the highlight around the solution.
    double sx = 0, sy = 0, sw = 0;
    for (int y = s.rect.y0; y < s.rect.y1; ++y) {
      for (int x = s.rect.x0; x < s.rect.x1; ++x) {
        if (std::abs(x + 0.5 - p.x()) > 12 || std::abs(y + 0.5 - p.y()) > 12) continue;
        const size_t i = static_cast<size_t>(y - s.rect.y0) * s.rect.width() + (x - s.rect.x0);
        const double w = s.alpha[i] * s.color[3 * i];
        sx += w * (x + 0.5);
        sy += w * (y + 0.5);
        sw += w;
      }
    }
    REQUIRE(sw > 0);
    CHECK(std::hypot(sx / sw - p.x(), sy / sw - p.y()) < 1.0);
  }
}

TEST_CASE("compositing with no sprites leaves the frame unchanged") {
  LdrImage frame(8, 8, 0.3f);
  const LdrImage out = composite(frame, {});
  for (size_t i = 0; i < frame.data().size(); ++i) CHECK(out.data()[i] == frame.data()[i]);
}

TEST_CASE("opaque sprite replaces pixels and the nearer of two overlapping sprites wins") {
  LdrImage frame(10, 10, 0.2f);
  auto make = [](PixelRect r, float color, float depth) {
    Sprite s;
    s.rect = r;
    const size_t n = static_cast<size_t>(r.width()) * r.height();
    s.color.assign(3 * n, color);
    s.alpha.assign(n, 1.0f);
    s.depth.assign(n, depth);
    return s;
  };
  const std::vector<Sprite> one{make({2, 2, 6, 6}, 0.9f, 3.0f)};
  const LdrImage a = composite(frame, one);
  CHECK(a.at(3, 3, 0) == 0.9f);
  CHECK(a.at(7, 7, 0) == 0.2f);

  // Listed far-first: per-pixel depth order must still pick the near one.
  const std::vector<Sprite> two{make({0, 0, 6, 6}, 0.1f, 5.0f), make({4, 4, 10, 10}, 0.7f, 2.0f)};
  const LdrImage b = composite(frame, two);
  CHECK(b.at(5, 5, 1) == 0.7f);
  CHECK(b.at(1, 1, 1) == 0.1f);
  CHECK(b.at(8, 8, 1) == 0.7f);

  std::vector<Sprite> outside{make({8, 8, 12, 12}, 0.5f, 1.0f)};
  CHECK_THROWS_AS(composite(frame, outside), ValidationError);
}

TEST_CASE("partial coverage blends over the background") {
  LdrImage frame(4, 4, 0.0f);
  Sprite s;
  s.rect = {1, 1, 2, 2};
  s.color = {1.0f, 1.0f, 1.0f};
  s.alpha = {0.25f};
  s.depth = {1.0f};
  const std::vector<Sprite> sprites{s};
  CHECK(composite(frame, sprites).at(1, 1, 0) == doctest::Approx(0.25));
}

TEST_CASE("footprint weights sum to one on covered pixels") {
  const Camera cam = square_camera(48, 40);
  const BallFootprint fp = trace_ball_footprint(Ball{Vec3(0.2, 0.1, 1.5), 0.3}, cam, 16);
  for (size_t i = 0; i < fp.pixel_count(); ++i) {
    double sum = 0;
    for (uint32_t k = fp.offsets[i]; k < fp.offsets[i + 1]; ++k) sum += fp.taps[k].weight;
    if (fp.alpha[i] > 0) {
      CHECK(sum == doctest::Approx(1.0));
    } else {
      CHECK(fp.offsets[i] == fp.offsets[i + 1]);
    }
  }
}

TEST_CASE("unwrapping a constant sprite gives a constant env on the valid region") {
  const Camera cam = square_camera(128, 128);
  const Ball ball{Vec3(0, 0, 2), 0.5};
  const Sprite s = render_ball(EnvMap(16, 2.0f), ball, cam, 4);
  const UnwrapResult u = unwrap_ball(s, ball, cam, 32);
  CHECK(u.valid.count() > 0);
  for (int i = 0; i < u.env.texel_count(); ++i) {
    if (!u.valid.data()[i]) continue;
    CHECK(u.env.texel(i)[1] == doctest::Approx(2.0).epsilon(1e-6));
  }
}

TEST_CASE("validity covers more than 95 percent of the sphere for a small ball") {
  const Camera cam = square_camera(256, 256);
  // Angular diameter 2 * asin(0.25 / 2) is about 14.4 degrees.
  const Ball ball{Vec3(0, 0, 2), 0.25};
  REQUIRE(2 * std::asin(ball.radius / 2.0) < 15 * pi / 180);
  const Sprite s = render_ball(EnvMap(16, 1.0f), ball, cam, 4);
  const int h = 64;
  const UnwrapResult u = unwrap_ball(s, ball, cam, h);
  const std::vector<double> w = solid_angle_weights(h);
  double valid = 0;
  for (int i = 0; i < u.env.texel_count(); ++i) valid += u.valid.data()[i] * w[i / (2 * h)];
  CHECK(valid / (4 * pi) > 0.95);
}

TEST_CASE("render then unwrap reproduces a smooth env") {
  const Camera cam = square_camera(256, 256);
  const Ball ball{Vec3(0, 0, 2), 0.8};
  const int h = 32;
  EnvMap env(h);
  for (int i = 0; i < env.texel_count(); ++i) {
    const Vec3 d = texel_center_dir(i % (2 * h), i / (2 * h), h);
    env.set_texel(i, {1.0 + 0.5 * d.x(), 1.0 + 0.5 * d.y() * d.z(), 1.2 - 0.4 * d.z()});
  }
  const UnwrapResult u = unwrap_ball(render_ball(env, ball, cam, 4), ball, cam, h);
  double se = 0;
  int n = 0;
  for (int i = 0; i < env.texel_count(); ++i) {
    if (!u.valid.data()[i]) continue;
    for (int c = 0; c < 3; ++c) se += std::pow(u.env.texel(i)[c] - env.texel(i)[c], 2);
    n += 3;
  }
  REQUIRE(n > 0);
  const double psnr = 10 * std::log10(1.6 * 1.6 / (se / n));
  CHECK(psnr > 35.0);
}
