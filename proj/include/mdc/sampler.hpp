#pragma once

#include <vector>

#include "mdc/forward.hpp"
#include "mdc/predictor.hpp"
#include "mdc/rng.hpp"

namespace mdc {

struct SamplerConfig {
  int steps = 1000;
  double temperature = 1.0;  // applied to predictor logits only
  double t_min = kTimeFloor; // time of the forced draw for residual masks
};

// Discrete-time ancestral reverse sampling from all-mask initialization.
// At step i = steps..1 every masked position unmasks with probability
// xi_{s,t} = (alpha_s - alpha_t)/(1 - alpha_t) into a value drawn from the
// (tempered) model prediction; unmasked positions never change. Residual
// masks left by a shifted schedule are resolved by one forced draw from
// mu_theta at t_min.
TokenSequence sample(const Predictor& p, const ForwardKernel& k, int n_tokens,
                     const SamplerConfig& cfg, RngStream& rng);

// State-dependent sampler: a masked position stays masked with probability
// sum_i (s/t)^{w_i} mu_i and unmasks to value i with (1 - (s/t)^{w_i}) mu_i.
TokenSequence sample_genmd4(const Predictor& p, const Vocabulary& v,
                            int n_tokens, const VectorSchedule& vs,
                            const SamplerConfig& cfg, RngStream& rng);

// Reverse-chain snapshots every `stride` steps: first entry is the all-mask
// state, last the final sequence. stride must divide cfg.steps.
std::vector<TokenSequence> trajectory(const Predictor& p,
                                      const ForwardKernel& k, int n_tokens,
                                      const SamplerConfig& cfg, int stride,
                                      RngStream& rng);

}  // namespace mdc
