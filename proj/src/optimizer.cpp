#include "mdc/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mdc {

void adamw_step(std::span<double> params, std::span<const double> grad,
                AdamState& state, const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adamw_step: shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(params[i]) || !std::isfinite(grad[i]))
      throw std::runtime_error("adamw_step: non-finite input");
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                           cfg.weight_decay * params[i]);
  }
}

void ema_update(std::span<double> ema, std::span<const double> params,
                double decay) {
  if (ema.size() != params.size())
    throw std::invalid_argument("ema_update: shape mismatch");
  if (!(decay >= 0.0 && decay < 1.0))
    throw std::invalid_argument("ema_update: decay must be in [0, 1)");
  for (std::size_t i = 0; i < ema.size(); ++i)
    ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

}  // namespace mdc
