#include "lfd/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "lfd/errors.hpp"

namespace lfd {

double cosine_lr(const AdamConfig& cfg, int64_t step, int64_t total) {
  if (total <= 1) return cfg.lr;
  const double f = static_cast<double>(step) / static_cast<double>(total - 1);
  return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * f));
}

Adam::Adam(size_t size, AdamConfig cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

bool Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ValidationError("Adam step: parameter and gradient sizes do not match the optimizer state");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) {
      ++skipped_;
      return false;
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
  return true;
}

}  // namespace lfd
