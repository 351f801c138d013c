#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lfd {

struct AdamConfig {
  double lr = 1e-3;
  double lr_final = 1e-4;  // cosine decay target at the last step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Cosine decay from lr to lr_final over steps 0..total-1.
double cosine_lr(const AdamConfig& cfg, int64_t step, int64_t total);

class Adam {
 public:
  Adam(size_t size, AdamConfig cfg = {});

  // Applies one bias-corrected update at learning rate `lr`. Returns false and
  // leaves everything untouched when the gradient contains a non-finite value.
  bool step(std::span<double> params, std::span<const double> grad, double lr);
  bool step(std::span<double> params, std::span<const double> grad) { return step(params, grad, cfg_.lr); }

  int64_t step_count() const { return steps_; }
  int64_t skipped() const { return skipped_; }
  const AdamConfig& config() const { return cfg_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  int64_t steps_ = 0;
  int64_t skipped_ = 0;
};

}  // namespace lfd
