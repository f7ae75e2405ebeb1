#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdc/losses.hpp"

namespace mdc::oracle {

// Gauss-Legendre nodes and weights on [a, b].
struct Quadrature {
  std::vector<double> nodes, weights;
};
Quadrature gauss_legendre(int n, double a, double b);

// Composite rule on dyadic panels [a, 2a, 4a, ..., b]; accurate for
// integrands with an algebraic or logarithmic singularity at 0.
Quadrature gauss_legendre_log_panels(int per_panel, double a, double b);

// Enumerates all 2^N mask patterns of x0 at time t with their forward
// probabilities. fn(xt, prob). N is capped to keep enumeration honest.
void for_each_mask_pattern(const TokenSequence& x0, double t,
                           const ForwardKernel& k,
                           const std::function<void(const TokenSequence&,
                                                    double)>& fn);

// Exact loss by pattern enumeration + quadrature over [t_min, 1]. `k` is
// required for all kinds except genmd4 (which builds its kernel from vs).
double exact_loss(LossKind kind, const TokenSequence& x0, const Predictor& p,
                  const ForwardKernel* k, const VectorSchedule* vs,
                  double t_min, int quad_points = 64,
                  double score_scale = 1.0);

// Same, over an arbitrary quadrature rule.
double exact_loss_q(LossKind kind, const TokenSequence& x0, const Predictor& p,
                    const ForwardKernel* k, const VectorSchedule* vs,
                    const Quadrature& q, double score_scale = 1.0);

// Exact parameter gradient of exact_loss (quadrature of per-draw gradients).
void exact_loss_grad(LossKind kind, const TokenSequence& x0, Predictor& p,
                     const ForwardKernel* k, const VectorSchedule* vs,
                     double t_min, int quad_points, std::span<double> grad);

// Exact discrete-time bound: full sum over i = 2..T with pattern
// enumeration at each t(i); optionally plus boundary terms at t(1) and 1.
double exact_discrete_loss(const TokenSequence& x0, int T, const Predictor& p,
                           const ForwardKernel& k,
                           bool include_boundary = false);

// Exact gradient of the state-dependent loss with respect to the schedule
// exponents w, on [t_min, 1]:
//   -int (1/t) E[g] dt - int (1/t) E[f grad_w log q] dt.
std::vector<double> exact_w_gradient(const TokenSequence& x0,
                                     const Predictor& p,
                                     const VectorSchedule& vs, double t_min,
                                     int quad_points = 256);

// Pearson statistic of observed counts against expected probabilities.
double chi_square_stat(std::span<const long long> counts,
                       std::span<const double> probs);

}  // namespace mdc::oracle
