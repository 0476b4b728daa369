#pragma once

#include <cstdint>
#include <vector>

#include "linr/autodiff.hpp"

namespace linr::nn {

struct AdamConfig {
  double lr_initial = 0.01;
  double lr_min = 0.0004;
  double gamma = 0.992;
  // Optimizer steps between multiplicative decays.
  std::int64_t step_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 coefficient, added to the gradient as weight_decay * theta.
  double weight_decay = 1e-4;
};

/// Step-decayed learning rate: max(lr_min, lr_initial * gamma^floor(t / step_size)).
double scheduled_lr(const AdamConfig& cfg, std::int64_t step);

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from the accumulated gradients of `params`.
  void step(ParameterSet<T>& params);

  std::int64_t steps() const { return steps_; }
  double current_lr() const { return scheduled_lr(cfg_, steps_); }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace linr::nn
