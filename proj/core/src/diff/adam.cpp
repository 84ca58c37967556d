#include "mfn/diff/adam.hpp"

#include <cmath>

namespace mfn::diff {

void adam_step(std::span<Parameter* const> params, const AdamConfig& config) {
  for (Parameter* p : params) {
    if (p->frozen) {
      p->zero_grad();
      continue;
    }
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double m_corr = 1.0 - std::pow(config.beta1, t);
    const double v_corr = 1.0 - std::pow(config.beta2, t);
    auto value = p->value.data();
    auto grad = p->grad.data();
    auto m = p->adam_m.data();
    auto v = p->adam_v.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / m_corr;
      const double v_hat = v[i] / v_corr;
      value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    p->zero_grad();
  }
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  for (Parameter* p : params) {
    if (!p->frozen) {
      auto value = p->value.data();
      auto grad = p->grad.data();
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
    }
    p->zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace mfn::diff
