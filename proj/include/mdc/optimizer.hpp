#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mdc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One AdamW step with decoupled weight decay and bias correction.
// Throws on non-finite parameters or gradients.
void adamw_step(std::span<double> params, std::span<const double> grad,
                AdamState& state, const AdamConfig& cfg);

// ema <- decay * ema + (1 - decay) * params.
void ema_update(std::span<double> ema, std::span<const double> params,
                double decay);

}  // namespace mdc
