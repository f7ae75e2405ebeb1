#include "mdc/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace mdc {

namespace {

// Tempered probabilities from one position's raw log mu row.
void tempered_probs(const double* log_mu, int m, double temperature,
                    std::vector<double>& out) {
  out.resize(m);
  if (temperature == 1.0) {
    for (int j = 0; j < m; ++j) out[j] = std::exp(log_mu[j]);
    return;
  }
  double mx = -1e300;
  for (int j = 0; j < m; ++j) mx = std::max(mx, log_mu[j] / temperature);
  double z = 0.0;
  for (int j = 0; j < m; ++j) {
    out[j] = std::exp(log_mu[j] / temperature - mx);
    z += out[j];
  }
  for (int j = 0; j < m; ++j) out[j] /= z;
}

void check_cfg(const SamplerConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("sampler: steps >= 1");
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("sampler: temperature > 0");
}

// Forced categorical draw from mu at t_min for positions still masked after
// the last step (probability mass O(eps) under a shifted schedule).
void resolve_residual_masks(const Predictor& p, TokenSequence& x, double t_min,
                            double temperature, RngStream& rng) {
  if (x.masked_count() == 0) return;
  const int m = x.vocab.m;
  std::vector<double> log_mu(static_cast<std::size_t>(x.size()) * m);
  p.eval_log_probs(x, t_min, log_mu);
  std::vector<double> probs;
  for (int n = 0; n < x.size(); ++n) {
    if (x.ids[n] != x.vocab.mask_id()) continue;
    tempered_probs(log_mu.data() + static_cast<std::size_t>(n) * m, m,
                   temperature, probs);
    x.ids[n] = rng.next_categorical(probs);
  }
}

}  // namespace

TokenSequence sample(const Predictor& p, const ForwardKernel& k, int n_tokens,
                     const SamplerConfig& cfg, RngStream& rng) {
  check_cfg(cfg);
  if (k.state_dependent())
    throw std::invalid_argument("sample: use sample_genmd4 for vector schedules");
  const Vocabulary v = k.vocab();
  const int m = v.m;
  TokenSequence x = TokenSequence::all_mask(v, n_tokens);
  std::vector<double> log_mu(static_cast<std::size_t>(n_tokens) * m);
  std::vector<double> probs;

  for (int i = cfg.steps; i >= 1; --i) {
    const double t = static_cast<double>(i) / cfg.steps;
    const double s = static_cast<double>(i - 1) / cfg.steps;
    if (x.masked_count() == 0) break;
    p.eval_log_probs(x, t, log_mu);
    const double xi = k.unmask_prob(0, s, t);  // value-independent here
    for (int n = 0; n < n_tokens; ++n) {
      if (x.ids[n] != v.mask_id()) continue;
      if (rng.next_double() < xi) {
        tempered_probs(log_mu.data() + static_cast<std::size_t>(n) * m, m,
                       cfg.temperature, probs);
        x.ids[n] = rng.next_categorical(probs);
      }
    }
  }
  resolve_residual_masks(p, x, cfg.t_min, cfg.temperature, rng);
  return x;
}

TokenSequence sample_genmd4(const Predictor& p, const Vocabulary& v,
                            int n_tokens, const VectorSchedule& vs,
                            const SamplerConfig& cfg, RngStream& rng) {
  check_cfg(cfg);
  if (vs.size() != v.m)
    throw std::invalid_argument("sample_genmd4: |w| != m");
  const int m = v.m;
  TokenSequence x = TokenSequence::all_mask(v, n_tokens);
  std::vector<double> log_mu(static_cast<std::size_t>(n_tokens) * m);
  std::vector<double> mu, outcome(static_cast<std::size_t>(m) + 1);
  std::vector<double> stay(m);

  for (int i = cfg.steps; i >= 1; --i) {
    const double t = static_cast<double>(i) / cfg.steps;
    const double s = static_cast<double>(i - 1) / cfg.steps;
    if (x.masked_count() == 0) break;
    p.eval_log_probs(x, t, log_mu);
    // (s/t)^{w_i}: per-value probability that a masked token stays masked,
    // given the clean value would be i.
    for (int j = 0; j < m; ++j) stay[j] = std::pow(s / t, vs.w[j]);
    for (int n = 0; n < n_tokens; ++n) {
      if (x.ids[n] != v.mask_id()) continue;
      tempered_probs(log_mu.data() + static_cast<std::size_t>(n) * m, m,
                     cfg.temperature, mu);
      double stay_mass = 0.0;
      for (int j = 0; j < m; ++j) {
        outcome[j] = (1.0 - stay[j]) * mu[j];
        stay_mass += stay[j] * mu[j];
      }
      outcome[m] = stay_mass;
      const int draw = rng.next_categorical(outcome);
      if (draw != m) x.ids[n] = draw;
    }
  }
  resolve_residual_masks(p, x, cfg.t_min, cfg.temperature, rng);
  return x;
}

std::vector<TokenSequence> trajectory(const Predictor& p,
                                      const ForwardKernel& k, int n_tokens,
                                      const SamplerConfig& cfg, int stride,
                                      RngStream& rng) {
  check_cfg(cfg);
  if (stride < 1 || cfg.steps % stride != 0)
    throw std::invalid_argument("trajectory: stride must divide steps");
  if (k.state_dependent())
    throw std::invalid_argument("trajectory: scalar schedules only");
  const Vocabulary v = k.vocab();
  const int m = v.m;
  TokenSequence x = TokenSequence::all_mask(v, n_tokens);
  std::vector<TokenSequence> snaps;
  snaps.push_back(x);
  std::vector<double> log_mu(static_cast<std::size_t>(n_tokens) * m);
  std::vector<double> probs;

  for (int i = cfg.steps; i >= 1; --i) {
    const double t = static_cast<double>(i) / cfg.steps;
    const double s = static_cast<double>(i - 1) / cfg.steps;
    if (x.masked_count() > 0) {
      p.eval_log_probs(x, t, log_mu);
      const double xi = k.unmask_prob(0, s, t);
      for (int n = 0; n < n_tokens; ++n) {
        if (x.ids[n] != v.mask_id()) continue;
        if (rng.next_double() < xi) {
          tempered_probs(log_mu.data() + static_cast<std::size_t>(n) * m, m,
                         cfg.temperature, probs);
          x.ids[n] = rng.next_categorical(probs);
        }
      }
    }
    if ((cfg.steps - i + 1) % stride == 0) snaps.push_back(x);
  }
  resolve_residual_masks(p, snaps.back(), cfg.t_min, cfg.temperature, rng);
  return snaps;
}

}  // namespace mdc
