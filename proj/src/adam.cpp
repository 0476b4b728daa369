#include "linr/adam.hpp"

#include <algorithm>
#include <cmath>

namespace linr::nn {

double scheduled_lr(const AdamConfig& cfg, std::int64_t step) {
  const auto decays = static_cast<double>(step / cfg.step_size);
  return std::max(cfg.lr_min, cfg.lr_initial * std::pow(cfg.gamma, decays));
}

template <typename T>
void Adam<T>::step(ParameterSet<T>& params) {
  if (m_.size() != params.tensors()) {
    m_.assign(params.tensors(), {});
    v_.assign(params.tensors(), {});
    for (std::size_t i = 0; i < params.tensors(); ++i) {
      m_[i].assign(params[static_cast<int>(i)].value.size(), T(0));
      v_[i].assign(params[static_cast<int>(i)].value.size(), T(0));
    }
  }
  const double lr = scheduled_lr(cfg_, steps_);
  ++steps_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_)));
  const T corr2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_)));
  const T step_lr = static_cast<T>(lr);
  const T eps = static_cast<T>(cfg_.eps);
  const T decay = static_cast<T>(cfg_.weight_decay);

  for (std::size_t i = 0; i < params.tensors(); ++i) {
    auto& p = params[static_cast<int>(i)];
    auto& theta = p.value.data();
    const auto& grad = p.grad.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const T g = grad[k] + decay * theta[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const T mhat = m[k] / corr1;
      const T vhat = v[k] / corr2;
      theta[k] -= step_lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace linr::nn
