#pragma once

#include <span>
#include <vector>

#include "mdc/forward.hpp"
#include "mdc/predictor.hpp"
#include "mdc/rng.hpp"

namespace mdc {

// Unbiased gradient of the state-dependent loss with respect to the schedule
// exponents w, REINFORCE leave-one-out with two forward samples sharing one
// time draw.
struct WGradient {
  std::vector<double> grad_w;         // pathwise + rloo
  std::vector<double> pathwise_term;  // -(1/2t) (g(x1) + g(x2))
  std::vector<double> rloo_term;      // -(1/2t) (dlogq1 - dlogq2)(f1 - f2)
  int sample_count = 2;
};

// g(x_t, x_0) = sum over masked positions of
//   x0 - mu + x0 x0^T log mu,  an m-vector.
void g_vector(const TokenSequence& x0, const TokenSequence& xt,
              const Predictor& p, double t, std::span<double> g);

// f(x_t, x_0) = w^T g(x_t, x_0).
double f_scalar(const VectorSchedule& vs, std::span<const double> g);

// Per-coordinate derivative of log q(x_t | x_0) with respect to w:
// masked position with value i contributes log t; a kept one contributes
// -t^{w_i} log t / (1 - t^{w_i}). Domain error at t in {0, 1}.
void grad_log_q(const TokenSequence& x0, const TokenSequence& xt,
                const VectorSchedule& vs, double t, std::span<double> out);

// Single-t estimate (no time-density factor); draws the two forward samples
// from rng.
WGradient rloo_w_gradient_at(const TokenSequence& x0, const Predictor& p,
                             const VectorSchedule& vs, double t,
                             RngStream& rng);

// Full estimate: draws t ~ Uniform(t_min, 1) and scales by the density span.
WGradient rloo_w_gradient(const TokenSequence& x0, const Predictor& p,
                          const VectorSchedule& vs, RngStream& rng,
                          double t_min = kTimeFloor);

// Biased baseline that drops the REINFORCE term; exists to demonstrate the
// bias, never to train with.
std::vector<double> pathwise_only_w_gradient(const TokenSequence& x0,
                                             const Predictor& p,
                                             const VectorSchedule& vs,
                                             RngStream& rng,
                                             double t_min = kTimeFloor);

}  // namespace mdc
