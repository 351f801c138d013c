#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "lfd/errors.hpp"
#include "lfd/lightfield.hpp"

using namespace lfd;

namespace {

DomainBox test_box() {
  DomainBox b;
  b.x_min = Vec3(-2, -1, 0);
  b.x_max = Vec3(2, 1.5, 5);
  b.t_min = 1;
  b.t_max = 10;
  return b;
}

std::vector<Query> random_queries(int n, uint64_t seed, const DomainBox& box) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  std::vector<Query> qs;
  for (int i = 0; i < n; ++i) {
    Query q;
    for (int k = 0; k < 3; ++k) q.x[k] = box.x_min[k] + u(rng) * (box.x_max[k] - box.x_min[k]);
    q.t = box.t_min + u(rng) * (box.t_max - box.t_min);
    q.d = Vec3(g(rng), g(rng), g(rng)).normalized();
    qs.push_back(q);
  }
  return qs;
}

// Straight-line reference network written from the architecture description:
// per layer a column-major weight block then the bias, ReLU hidden units,
// concatenated skip input, softplus output.
Rgb reference_eval(const Architecture& a, const DomainBox& box, std::span<const double> params, const Query& q) {
  std::vector<double> enc;
  auto encode = [&](double p, int freqs) {
    for (int k = 0; k < freqs; ++k) {
      enc.push_back(std::sin(std::pow(2.0, k) * std::numbers::pi * p));
      enc.push_back(std::cos(std::pow(2.0, k) * std::numbers::pi * p));
    }
  };
  for (int i = 0; i < 3; ++i) encode((q.x[i] - box.x_min[i]) / (box.x_max[i] - box.x_min[i]) * 2 - 1, a.freqs_x);
  if (a.time_input) encode((q.t - box.t_min) / (box.t_max - box.t_min) * 2 - 1, a.freqs_t);
  for (int i = 0; i < 3; ++i) encode(q.d[i], a.freqs_d);

  std::vector<double> h = enc;
  size_t off = 0;
  for (int l = 1; l <= a.hidden_layers + 1; ++l) {
    std::vector<double> in = h;
    if (l == a.skip_layer) in.insert(in.end(), enc.begin(), enc.end());
    const int n_out = l <= a.hidden_layers ? a.hidden_width : 3;
    const int n_in = static_cast<int>(in.size());
    std::vector<double> out(n_out);
    for (int o = 0; o < n_out; ++o) {
      double s = params[off + static_cast<size_t>(n_in) * n_out + o];
      for (int i = 0; i < n_in; ++i) s += params[off + static_cast<size_t>(i) * n_out + o] * in[i];
      out[o] = l <= a.hidden_layers ? std::max(0.0, s) : std::log1p(std::exp(s));
    }
    off += static_cast<size_t>(n_in) * n_out + n_out;
    h = out;
  }
  return {h[0], h[1], h[2]};
}

double softplus(double y) { return std::log1p(std::exp(y)); }

double weighted_sum(const LightField& f, std::span<const Query> qs, std::span<const double> up) {
  const auto pass = f.forward<double>(qs);
  double s = 0;
  for (size_t i = 0; i < up.size(); ++i) s += up[i] * pass.radiance[i];
  return s;
}

}  // namespace

TEST_CASE("parameter count follows the layer shapes") {
  Architecture a;
  CHECK(a.encoded_dim() == 2 * (3 * 6 + 4 + 3 * 4));
  const size_t e = a.encoded_dim();
  const size_t expected = 256 * (e + 1) + 256 * 257 + 256 * (256 + e + 1) + 3 * 256 * 257 + 3 * 257;
  CHECK(a.parameter_count() == expected);
  Architecture no_t = a;
  no_t.time_input = false;
  CHECK(no_t.encoded_dim() == a.encoded_dim() - 8);
}

TEST_CASE("positional encoding uses sin and cos at 2^k pi") {
  double out[8];
  positional_encoding(0.25, 4, out);
  for (int k = 0; k < 4; ++k) {
    CHECK(out[2 * k] == doctest::Approx(std::sin(std::pow(2.0, k) * std::numbers::pi * 0.25)));
    CHECK(out[2 * k + 1] == doctest::Approx(std::cos(std::pow(2.0, k) * std::numbers::pi * 0.25)));
  }
}

TEST_CASE("zero final layer gives ln 2 everywhere") {
  Architecture a;
  a.hidden_width = 32;
  LightField f = LightField::initialize(a, test_box(), 1);
  const size_t last = a.parameter_count() - 3 * (a.hidden_width + 1);
  std::vector<double> p(f.params().begin(), f.params().end());
  std::fill(p.begin() + last, p.end(), 0.0);
  const LightField zero(a, test_box(), p);
  for (const Query& q : random_queries(20, 2, test_box())) {
    const Rgb c = zero.eval(q.x, q.t, q.d);
    for (double v : c) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  const EnvMap env = zero.eval_envmap(Vec3(0, 0, 1), 2, 8);
  for (float v : env.image().data()) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("eval matches a straight-line reimplementation") {
  for (uint64_t seed : {3u, 4u}) {
    Architecture a;
    const LightField f = LightField::initialize(a, test_box(), seed);
    // Randomize every parameter, biases included, so no path is trivially zero.
    std::vector<double> p(f.params().begin(), f.params().end());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.05);
    for (double& v : p) v += g(rng);
    const LightField field(a, test_box(), p);
    for (const Query& q : random_queries(25, seed + 10, test_box())) {
      const Rgb got = field.eval(q.x, q.t, q.d);
      const Rgb ref = reference_eval(a, test_box(), p, q);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - ref[c]) < 1e-6);
      const Rgb again = field.eval(q.x, q.t, q.d);
      CHECK(again == got);
    }
  }
}

TEST_CASE("eval_envmap shape and agreement with per-direction eval") {
  Architecture a;
  a.hidden_width = 64;
  const LightField f = LightField::initialize(a, test_box(), 5);
  const EnvMap big = f.eval_envmap(Vec3(0.1, 0.2, 2), 3, 128);
  CHECK(big.height() == 128);
  CHECK(big.width() == 256);
  const EnvMap env = f.eval_envmap(Vec3(0.1, 0.2, 2), 3, 8);
  for (int i = 0; i < env.texel_count(); ++i) {
    const Rgb c = f.eval(Vec3(0.1, 0.2, 2), 3, texel_center_dir(i % 16, i / 16, 8));
    const Rgb t = env.texel(i);
    for (int k = 0; k < 3; ++k) CHECK(static_cast<float>(c[k]) == static_cast<float>(t[k]));
  }
}

TEST_CASE("initialization is deterministic per seed and starts in a bounded range") {
  Architecture a;
  const LightField f1 = LightField::initialize(a, test_box(), 9);
  const LightField f2 = LightField::initialize(a, test_box(), 9);
  const LightField f3 = LightField::initialize(a, test_box(), 10);
  CHECK(std::equal(f1.params().begin(), f1.params().end(), f2.params().begin()));
  CHECK_FALSE(std::equal(f1.params().begin(), f1.params().end(), f3.params().begin()));

  const auto qs = random_queries(10000, 11, test_box());
  const auto pass = f1.forward<double>(qs);
  double lo = 1e9, hi = -1e9;
  for (double v : pass.radiance) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= softplus(-3.0));
  CHECK(hi <= softplus(3.0));
}

TEST_CASE("radiance is non-negative even for extreme parameters") {
  Architecture a;
  a.hidden_width = 16;
  const LightField f = LightField::initialize(a, test_box(), 12);
  std::vector<double> p(f.params().begin(), f.params().end());
  for (double& v : p) v *= 40.0;
  const LightField big(a, test_box(), p);
  for (double v : big.forward<double>(random_queries(500, 13, test_box())).radiance) CHECK(v >= 0.0);
}

TEST_CASE("backward matches central finite differences") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    Architecture a;
    const LightField f = LightField::initialize(a, test_box(), seed);
    std::vector<double> p(f.params().begin(), f.params().end());
    const auto qs = random_queries(6, seed, test_box());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> up(qs.size() * 3);
    for (double& v : up) v = g(rng);

    const auto pass = f.forward<double>(qs);
    const std::vector<double> grad = f.backward(pass, up);
    REQUIRE(grad.size() == p.size());

    std::uniform_int_distribution<size_t> pick(0, p.size() - 1);
    const double h = 1e-6;
    int bad = 0;
    for (int i = 0; i < 200; ++i) {
      const size_t k = pick(rng);
      std::vector<double> plus = p, minus = p;
      plus[k] += h;
      minus[k] -= h;
      const double fd =
          (weighted_sum(LightField(a, test_box(), plus), qs, up) - weighted_sum(LightField(a, test_box(), minus), qs, up)) /
          (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(grad[k]));
      if (std::abs(fd - grad[k]) > 1e-4 * scale + 1e-10) {
        ++bad;
        MESSAGE("coordinate " << k << ": analytic " << grad[k] << " vs fd " << fd);
      }
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("float and double passes agree") {
  Architecture a;
  const LightField f = LightField::initialize(a, test_box(), 30);
  const auto qs = random_queries(300, 31, test_box());
  const auto pd = f.forward<double>(qs);
  const auto pf = f.forward<float>(qs);
  for (size_t i = 0; i < pd.radiance.size(); ++i) CHECK(pf.radiance[i] == doctest::Approx(pd.radiance[i]).epsilon(1e-4));
  std::vector<double> up(qs.size() * 3, 1.0);
  const auto gd = f.backward(pd, up);
  const auto gf = f.backward(pf, up);
  double num = 0, den = 0;
  for (size_t i = 0; i < gd.size(); ++i) {
    num += (gd[i] - gf[i]) * (gd[i] - gf[i]);
    den += gd[i] * gd[i];
  }
  CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("backward is linear in the upstream gradient") {
  Architecture a;
  a.hidden_width = 48;
  const LightField f = LightField::initialize(a, test_box(), 40);
  const auto qs = random_queries(5, 41, test_box());
  const auto pass = f.forward<double>(qs);
  const std::vector<double> zero = f.backward(pass, std::vector<double>(15, 0.0));
  for (double v : zero) CHECK(v == 0.0);

  std::vector<double> up(15);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  for (double& v : up) v = g(rng);
  const std::vector<double> full = f.backward(pass, up);
  std::vector<double> sum(full.size(), 0.0);
  for (size_t i = 0; i < qs.size(); ++i) {
    const auto single = f.forward<double>(std::span<const Query>(&qs[i], 1));
    const auto gi = f.backward(single, std::span<const double>(&up[3 * i], 3));
    for (size_t k = 0; k < sum.size(); ++k) sum[k] += gi[k];
  }
  for (size_t k = 0; k < sum.size(); ++k) CHECK(sum[k] == doctest::Approx(full[k]).epsilon(1e-9).scale(1e-6));
  CHECK_THROWS_AS(f.backward(pass, std::vector<double>(3, 0.0)), ValidationError);
}

TEST_CASE("single-image mode ignores t") {
  Architecture a;
  a.time_input = false;
  a.hidden_width = 32;
  DomainBox box = test_box();
  box.t_max = box.t_min;
  const LightField f = LightField::initialize(a, box, 50);
  const Vec3 x(0.3, 0.1, 1.0), d = Vec3(0.2, 0.3, 0.9).normalized();
  const Rgb r1 = f.eval(x, 1.0, d);
  CHECK(f.eval(x, 7.5, d) == r1);
  CHECK(f.eval(x, -3.0, d) == r1);
}

TEST_CASE("out-of-box inputs are clamped and counted") {
  Architecture a;
  a.hidden_width = 16;
  const LightField f = LightField::initialize(a, test_box(), 60);
  CHECK(f.clamp_count() == 0);
  const Rgb inside = f.eval(Vec3(2, 1.5, 5), 10, Vec3(0, 0, 1));
  CHECK(f.clamp_count() == 0);
  const Rgb outside = f.eval(Vec3(3, 9, 7), 12, Vec3(0, 0, 1));
  CHECK(f.clamp_count() == 1);
  CHECK(inside == outside);
}

TEST_CASE("non-finite or mis-sized parameters are rejected") {
  Architecture a;
  a.hidden_width = 8;
  std::vector<double> p(a.parameter_count(), 0.0);
  p[3] = std::nan("");
  CHECK_THROWS_AS(LightField(a, test_box(), p), ValidationError);
  CHECK_THROWS_AS(LightField(a, test_box(), std::vector<double>(5)), ValidationError);
}

TEST_CASE("checkpoint round trip and corruption") {
  test::TempDir dir("ckpt");
  Architecture a;
  a.hidden_width = 24;
  a.freqs_x = 5;
  const LightField f = LightField::initialize(a, test_box(), 70);
  save_checkpoint(f, dir / "m.bin");
  CHECK(std::filesystem::exists(sidecar_path(dir / "m.bin")));
  const LightField g = load_checkpoint(dir / "m.bin");
  CHECK(g.architecture() == a);
  CHECK(g.domain().x_min == test_box().x_min);
  CHECK(g.domain().t_max == test_box().t_max);
  for (size_t i = 0; i < f.params().size(); ++i) CHECK(g.params()[i] == static_cast<float>(f.params()[i]));

  {
    std::ifstream in(dir / "m.bin", std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "LFDP");
  }
  const auto size = std::filesystem::file_size(dir / "m.bin");
  std::filesystem::copy_file(dir / "m.bin", dir / "cut.bin");
  std::filesystem::copy_file(sidecar_path(dir / "m.bin"), sidecar_path(dir / "cut.bin"));
  std::filesystem::resize_file(dir / "cut.bin", size - 7);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), FormatError);

  {
    std::fstream io(dir / "m.bin", std::ios::binary | std::ios::in | std::ios::out);
    io.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "m.bin"), FormatError);
}
