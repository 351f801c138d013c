#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "lfd/errors.hpp"
#include "lfd/optimizer.hpp"

using namespace lfd;

TEST_CASE("zero gradient leaves parameters unchanged") {
  Adam adam(3);
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g(3, 0.0);
  for (int i = 0; i < 10; ++i) CHECK(adam.step(p, g));
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("quadratic converges to its minimum") {
  Adam adam(1, {.lr = 0.1});
  std::vector<double> w{0.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g{2.0 * (w[0] - 3.0)};
    adam.step(w, g);
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-3);
}

TEST_CASE("first step moves by lr times the gradient sign") {
  Adam adam(3, {.lr = 0.01});
  std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> g{5.0, -0.2, 1e3};
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("updates match a scalar textbook reference") {
  const AdamConfig cfg{.lr = 0.05, .beta1 = 0.8, .beta2 = 0.99, .eps = 1e-6};
  Adam adam(1, cfg);
  std::vector<double> p{1.5};
  double x = 1.5, m = 0, v = 0;
  for (int t = 1; t <= 50; ++t) {
    const double g = std::sin(3.0 * p[0]) + 0.1 * t;
    adam.step(p, std::vector<double>{g});
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    x -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(std::abs(p[0] - x) < 1e-12);
  }
}

TEST_CASE("non-finite gradients are skipped without touching state") {
  Adam adam(2);
  std::vector<double> p{1.0, 2.0};
  adam.step(p, std::vector<double>{0.5, 0.5});
  const std::vector<double> before = p;
  const std::vector<double> m(adam.first_moment().begin(), adam.first_moment().end());
  CHECK_FALSE(adam.step(p, std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 1.0}));
  CHECK_FALSE(adam.step(p, std::vector<double>{1.0, std::numeric_limits<double>::infinity()}));
  CHECK(p == before);
  CHECK(std::equal(m.begin(), m.end(), adam.first_moment().begin()));
  CHECK(adam.step_count() == 1);
  CHECK(adam.skipped() == 2);
  CHECK_THROWS_AS(adam.step(p, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  const AdamConfig cfg{.lr = 1e-3, .lr_final = 1e-4};
  CHECK(cosine_lr(cfg, 0, 101) == doctest::Approx(1e-3));
  CHECK(cosine_lr(cfg, 100, 101) == doctest::Approx(1e-4));
  CHECK(cosine_lr(cfg, 50, 101) == doctest::Approx(0.5 * (1e-3 + 1e-4)));
  CHECK(cosine_lr(cfg, 0, 1) == 1e-3);
  double prev = 1.0;
  for (int s = 0; s < 101; ++s) {
    const double lr = cosine_lr(cfg, s, 101);
    CHECK(lr <= prev);
    prev = lr;
  }
}
