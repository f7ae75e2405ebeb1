#include "mdc/genmd4.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdc {

void g_vector(const TokenSequence& x0, const TokenSequence& xt,
              const Predictor& p, double t, std::span<double> g) {
  const int m = p.value_count();
  if (static_cast<int>(g.size()) != m)
    throw std::invalid_argument("g_vector: bad output size");
  std::fill(g.begin(), g.end(), 0.0);
  if (xt.masked_count() == 0) return;
  std::vector<double> log_mu(static_cast<std::size_t>(xt.size()) * m);
  p.eval_log_probs(xt, t, log_mu);
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] != x0.vocab.mask_id()) continue;
    const double* row = log_mu.data() + static_cast<std::size_t>(n) * m;
    for (int i = 0; i < m; ++i) g[i] -= std::exp(row[i]);
    g[x0.ids[n]] += 1.0 + row[x0.ids[n]];
  }
}

double f_scalar(const VectorSchedule& vs, std::span<const double> g) {
  if (static_cast<int>(g.size()) != vs.size())
    throw std::invalid_argument("f_scalar: size mismatch");
  double f = 0.0;
  for (int i = 0; i < vs.size(); ++i) f += vs.w[i] * g[i];
  return f;
}

void grad_log_q(const TokenSequence& x0, const TokenSequence& xt,
                const VectorSchedule& vs, double t, std::span<double> out) {
  if (!(t > 0.0 && t < 1.0))
    throw std::domain_error("grad_log_q: t must be in (0,1)");
  if (static_cast<int>(out.size()) != vs.size())
    throw std::invalid_argument("grad_log_q: bad output size");
  std::fill(out.begin(), out.end(), 0.0);
  const double log_t = std::log(t);
  for (int n = 0; n < x0.size(); ++n) {
    const int i = x0.ids[n];
    if (xt.ids[n] == x0.vocab.mask_id()) {
      out[i] += log_t;  // d/dw log t^w
    } else {
      const double tw = std::pow(t, vs.w[i]);
      out[i] += -tw * log_t / (1.0 - tw);
    }
  }
}

namespace {

WGradient rloo_core(const TokenSequence& x0, const Predictor& p,
                    const VectorSchedule& vs, double t, RngStream& rng,
                    double density_span) {
  require_clean(x0);
  const int m = vs.size();
  const ForwardKernel kernel(x0.vocab, vs);
  const TokenSequence x1 = kernel.sample_forward(x0, t, rng);
  const TokenSequence x2 = kernel.sample_forward(x0, t, rng);

  std::vector<double> g1(m), g2(m), s1(m), s2(m);
  g_vector(x0, x1, p, t, g1);
  g_vector(x0, x2, p, t, g2);
  grad_log_q(x0, x1, vs, t, s1);
  grad_log_q(x0, x2, vs, t, s2);
  const double f1 = f_scalar(vs, g1);
  const double f2 = f_scalar(vs, g2);

  WGradient out;
  out.grad_w.resize(m);
  out.pathwise_term.resize(m);
  out.rloo_term.resize(m);
  const double c = -density_span / (2.0 * t);
  for (int i = 0; i < m; ++i) {
    out.pathwise_term[i] = c * (g1[i] + g2[i]);
    out.rloo_term[i] = c * (s1[i] - s2[i]) * (f1 - f2);
    out.grad_w[i] = out.pathwise_term[i] + out.rloo_term[i];
  }
  return out;
}

}  // namespace

WGradient rloo_w_gradient_at(const TokenSequence& x0, const Predictor& p,
                             const VectorSchedule& vs, double t,
                             RngStream& rng) {
  return rloo_core(x0, p, vs, t, rng, 1.0);
}

WGradient rloo_w_gradient(const TokenSequence& x0, const Predictor& p,
                          const VectorSchedule& vs, RngStream& rng,
                          double t_min) {
  const double span = 1.0 - t_min;
  const double t = t_min + span * rng.next_unit_open();
  return rloo_core(x0, p, vs, t, rng, span);
}

std::vector<double> pathwise_only_w_gradient(const TokenSequence& x0,
                                             const Predictor& p,
                                             const VectorSchedule& vs,
                                             RngStream& rng, double t_min) {
  const double span = 1.0 - t_min;
  const double t = t_min + span * rng.next_unit_open();
  WGradient full = rloo_core(x0, p, vs, t, rng, span);
  return full.pathwise_term;
}

}  // namespace mdc
