#include "mdc/oracle.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mdc/genmd4.hpp"

namespace mdc::oracle {

Quadrature gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1");
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  // Newton iteration on P_n; nodes come out in descending order of cos.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    q.nodes[i] = 0.5 * (b - a) * (-x) + 0.5 * (a + b);
    q.nodes[n - 1 - i] = 0.5 * (b - a) * x + 0.5 * (a + b);
    q.weights[i] = q.weights[n - 1 - i] = 0.5 * (b - a) * w;
  }
  return q;
}

void for_each_mask_pattern(
    const TokenSequence& x0, double t, const ForwardKernel& k,
    const std::function<void(const TokenSequence&, double)>& fn) {
  require_clean(x0);
  const int n = x0.size();
  if (n > 20) throw std::invalid_argument("for_each_mask_pattern: N too big");
  std::vector<double> keep(n);
  for (int i = 0; i < n; ++i) keep[i] = k.keep_prob(x0.ids[i], t);
  TokenSequence xt = x0;
  for (unsigned pat = 0; pat < (1u << n); ++pat) {
    double prob = 1.0;
    for (int i = 0; i < n; ++i) {
      const bool masked = (pat >> i) & 1u;
      xt.ids[i] = masked ? x0.vocab.mask_id() : x0.ids[i];
      prob *= masked ? 1.0 - keep[i] : keep[i];
    }
    if (prob > 0.0) fn(xt, prob);
  }
}

namespace {

double integrand_for(LossKind kind, const TokenSequence& x0,
                     const TokenSequence& xt, double t, const Predictor& p,
                     const ForwardKernel* k, const VectorSchedule* vs,
                     double score_scale) {
  switch (kind) {
    case LossKind::continuous_ce:
      return ce_integrand(x0, xt, t, p, *k);
    case LossKind::ctmc:
      return ctmc_integrand(x0, xt, t, p, *k);
    case LossKind::score_entropy: {
      ScoreView sv(p, *k->scalar_schedule(), score_scale);
      return score_integrand(x0, xt, t, sv, *k);
    }
    case LossKind::maskgit:
      return maskgit_integrand(x0, xt, t, p, *k);
    case LossKind::genmd4:
      return genmd4_integrand(x0, xt, t, p, *vs);
    case LossKind::discrete:
      throw std::invalid_argument("exact_loss: use exact_discrete_loss");
  }
  throw std::logic_error("bad kind");
}

}  // namespace

Quadrature gauss_legendre_log_panels(int per_panel, double a, double b) {
  if (!(a > 0.0 && a < b))
    throw std::invalid_argument("log_panels: need 0 < a < b");
  Quadrature out;
  double lo = a;
  while (lo < b) {
    const double hi = std::min(2.0 * lo, b);
    const Quadrature q = gauss_legendre(per_panel, lo, hi);
    out.nodes.insert(out.nodes.end(), q.nodes.begin(), q.nodes.end());
    out.weights.insert(out.weights.end(), q.weights.begin(), q.weights.end());
    lo = hi;
  }
  return out;
}

double exact_loss_q(LossKind kind, const TokenSequence& x0, const Predictor& p,
                    const ForwardKernel* k, const VectorSchedule* vs,
                    const Quadrature& q, double score_scale) {
  const ForwardKernel sample_kernel =
      kind == LossKind::genmd4 ? ForwardKernel(x0.vocab, *vs) : *k;
  double total = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double t = q.nodes[i];
    double et = 0.0;
    for_each_mask_pattern(x0, t, sample_kernel,
                          [&](const TokenSequence& xt, double prob) {
                            et += prob * integrand_for(kind, x0, xt, t, p, k,
                                                       vs, score_scale);
                          });
    total += q.weights[i] * et;
  }
  return total;
}

double exact_loss(LossKind kind, const TokenSequence& x0, const Predictor& p,
                  const ForwardKernel* k, const VectorSchedule* vs,
                  double t_min, int quad_points, double score_scale) {
  return exact_loss_q(kind, x0, p, k, vs,
                      gauss_legendre(quad_points, t_min, 1.0), score_scale);
}

void exact_loss_grad(LossKind kind, const TokenSequence& x0, Predictor& p,
                     const ForwardKernel* k, const VectorSchedule* vs,
                     double t_min, int quad_points, std::span<double> grad) {
  const ForwardKernel sample_kernel =
      kind == LossKind::genmd4 ? ForwardKernel(x0.vocab, *vs) : *k;
  const Quadrature q = gauss_legendre(quad_points, t_min, 1.0);
  for (int i = 0; i < quad_points; ++i) {
    const double t = q.nodes[i];
    for_each_mask_pattern(
        x0, t, sample_kernel, [&](const TokenSequence& xt, double prob) {
          loss_value_and_grad(kind, x0, xt, t, p, k, vs, q.weights[i] * prob,
                              grad);
        });
  }
}

double exact_discrete_loss(const TokenSequence& x0, int T, const Predictor& p,
                           const ForwardKernel& k, bool include_boundary) {
  if (T < 2) throw std::invalid_argument("exact_discrete_loss: T >= 2");
  const TimeGrid grid{T};
  double total = 0.0;
  for (int i = 2; i <= T; ++i) {
    const double s = grid.s(i), t = grid.t(i);
    for_each_mask_pattern(x0, t, k, [&](const TokenSequence& xt, double prob) {
      total += prob * per_step_kl(x0, xt, s, t, p, k);
    });
  }
  if (include_boundary) {
    const double logm = std::log(static_cast<double>(x0.vocab.m));
    for (int n = 0; n < x0.size(); ++n) {
      total += (1.0 - k.keep_prob(x0.ids[n], grid.t(1))) * logm;
      total += k.keep_prob(x0.ids[n], 1.0) * logm;
    }
  }
  return total;
}

std::vector<double> exact_w_gradient(const TokenSequence& x0,
                                     const Predictor& p,
                                     const VectorSchedule& vs, double t_min,
                                     int quad_points) {
  const int m = vs.size();
  const ForwardKernel kernel(x0.vocab, vs);
  // The integrand carries t^{w_i - 1} factors, singular at 0 for w_i < 1;
  // dyadic panels keep the rule accurate there.
  const Quadrature q = gauss_legendre_log_panels(quad_points / 8 + 8, t_min,
                                                 1.0);
  std::vector<double> grad(m, 0.0), g(m), slog(m);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double t = q.nodes[i];
    for_each_mask_pattern(
        x0, t, kernel, [&](const TokenSequence& xt, double prob) {
          g_vector(x0, xt, p, t, g);
          const double f = f_scalar(vs, g);
          grad_log_q(x0, xt, vs, t, slog);
          const double c = -q.weights[i] * prob / t;
          for (int j = 0; j < m; ++j) grad[j] += c * (g[j] + f * slog[j]);
        });
  }
  return grad;
}

double chi_square_stat(std::span<const long long> counts,
                       std::span<const double> probs) {
  if (counts.size() != probs.size())
    throw std::invalid_argument("chi_square_stat: size mismatch");
  long long total = 0;
  for (long long c : counts) total += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = probs[i] * static_cast<double>(total);
    if (expected <= 0.0) {
      if (counts[i] != 0)
        throw std::invalid_argument("chi_square_stat: mass on zero cell");
      continue;
    }
    const double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace mdc::oracle
