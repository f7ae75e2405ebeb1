#include "mdc/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdc {

namespace {

const Schedule& scalar_schedule_of(const ForwardKernel& k, const char* who) {
  const Schedule* s = k.scalar_schedule();
  if (!s)
    throw std::invalid_argument(std::string(who) +
                                ": requires a scalar schedule");
  return *s;
}

void eval_log_mu(const Predictor& p, const TokenSequence& xt, double t,
                 std::vector<double>& log_mu) {
  log_mu.resize(static_cast<std::size_t>(xt.size()) * p.value_count());
  p.eval_log_probs(xt, t, log_mu);
}

void check_consistent(const TokenSequence& x0, const TokenSequence& xt) {
  if (x0.size() != xt.size())
    throw std::invalid_argument("loss: x0/xt length mismatch");
  for (int n = 0; n < x0.size(); ++n)
    if (xt.ids[n] != x0.ids[n] && xt.ids[n] != x0.vocab.mask_id())
      throw std::invalid_argument(
          "loss: xt inconsistent with x0 (position neither kept nor masked)");
}

}  // namespace

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::discrete: return "L_T";
    case LossKind::continuous_ce: return "L_inf_ce";
    case LossKind::ctmc: return "L_ctmc";
    case LossKind::score_entropy: return "L_score";
    case LossKind::maskgit: return "L_maskgit";
    case LossKind::genmd4: return "L_genmd4";
  }
  return "?";
}

LossKind loss_kind_from_name(std::string_view name) {
  if (name == "L_T" || name == "discrete") return LossKind::discrete;
  if (name == "L_inf_ce" || name == "ce") return LossKind::continuous_ce;
  if (name == "L_ctmc" || name == "ctmc") return LossKind::ctmc;
  if (name == "L_score" || name == "score") return LossKind::score_entropy;
  if (name == "L_maskgit" || name == "maskgit") return LossKind::maskgit;
  if (name == "L_genmd4" || name == "genmd4") return LossKind::genmd4;
  throw std::invalid_argument("unknown loss kind: " + std::string(name));
}

double LossEstimate::variance() const {
  if (per_draw.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : per_draw) {
    const double d = v - value;
    acc += d * d;
  }
  return acc / (static_cast<double>(per_draw.size()) - 1.0);
}

double LossEstimate::std_error() const {
  if (per_draw.size() < 2) return 0.0;
  return std::sqrt(variance() / static_cast<double>(per_draw.size()));
}

double ScoreView::ratio(double t) const {
  const double a = alpha(sched_, t);
  return scale_ * a / (1.0 - a);
}

void ScoreView::score_at(const TokenSequence& xt, double t, int pos,
                         std::span<double> out) const {
  if (xt.ids[pos] != xt.vocab.mask_id())
    throw std::invalid_argument("ScoreView: position is not masked");
  const int m = pred_.value_count();
  std::vector<double> log_mu(static_cast<std::size_t>(xt.size()) * m);
  pred_.eval_log_probs(xt, t, log_mu);
  const double r = ratio(t);
  for (int j = 0; j < m; ++j)
    out[j] = r * std::exp(log_mu[static_cast<std::size_t>(pos) * m + j]);
}

double score_psi(double y) {
  if (y == 0.0) return 0.0;
  return y * std::log(y) - y;
}

// ---------------------------------------------------------------------------
// Integrands

double ce_integrand(const TokenSequence& x0, const TokenSequence& xt, double t,
                    const Predictor& p, const ForwardKernel& k) {
  check_consistent(x0, xt);
  const Schedule& sched = scalar_schedule_of(k, "ce_integrand");
  if (xt.masked_count() == 0) return 0.0;
  const double gamma = ce_weight(sched, t);
  const int m = p.value_count();
  std::vector<double> log_mu;
  eval_log_mu(p, xt, t, log_mu);
  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n)
    if (xt.ids[n] == x0.vocab.mask_id())
      acc += log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
  return gamma * acc;
}

double ctmc_integrand(const TokenSequence& x0, const TokenSequence& xt,
                      double t, const Predictor& p, const ForwardKernel& k,
                      double* theta_free) {
  check_consistent(x0, xt);
  const Schedule& sched = scalar_schedule_of(k, "ctmc_integrand");
  const double gamma = ce_weight(sched, t);
  const double beta = forward_beta(sched, t);
  const double log_rate = std::log(-gamma);
  const int m = p.value_count();
  const int mask = x0.vocab.mask_id();

  double free_part = 0.0, model_part = 0.0;
  TokenSequence probe = xt;
  std::vector<double> log_mu;
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] == mask) {
      // Masked state: only the diagonal R_theta(t)_{mm} = gamma survives,
      // and the constrained parameterization makes it model-free.
      free_part += gamma;
    } else {
      // Unmasked state k: Q(t)_{km} log R_theta(t)_{mk}, with the rate row
      // evaluated at the sequence re-masked at this position.
      probe.ids[n] = mask;
      eval_log_mu(p, probe, t, log_mu);
      model_part +=
          beta * log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
      free_part += beta * log_rate;
      probe.ids[n] = xt.ids[n];
    }
  }
  if (theta_free) *theta_free = -free_part;
  return -(free_part + model_part);
}

double score_integrand(const TokenSequence& x0, const TokenSequence& xt,
                       double t, const ScoreView& s, const ForwardKernel& k) {
  check_consistent(x0, xt);
  const Schedule& sched = scalar_schedule_of(k, "score_integrand");
  const double beta = forward_beta(sched, t);
  const double a = alpha(sched, t);
  const double r_true = a / (1.0 - a);  // data-side ratio q(j|x0)/q(m|x0)
  const double log_ratio_model = std::log(s.ratio(t));
  const int m = s.predictor().value_count();
  const int mask = x0.vocab.mask_id();
  if (xt.masked_count() == 0) return 0.0;

  std::vector<double> log_mu;
  eval_log_mu(s.predictor(), xt, t, log_mu);

  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] != mask) continue;  // Q row is zero away from clean states
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      const double log_sj =
          log_ratio_model + log_mu[static_cast<std::size_t>(n) * m + j];
      double term = std::exp(log_sj);
      if (j == x0.ids[n])
        term += -r_true * log_sj + score_psi(r_true);
      sum += term;
    }
    acc += beta * sum;
  }
  return acc;
}

double maskgit_integrand(const TokenSequence& x0, const TokenSequence& xt,
                         double t, const Predictor& p, const ForwardKernel& k) {
  check_consistent(x0, xt);
  (void)scalar_schedule_of(k, "maskgit_integrand");
  if (xt.masked_count() == 0) return 0.0;
  const int m = p.value_count();
  std::vector<double> log_mu;
  eval_log_mu(p, xt, t, log_mu);
  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n)
    if (xt.ids[n] == x0.vocab.mask_id())
      acc += log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
  return -acc;
}

double genmd4_integrand(const TokenSequence& x0, const TokenSequence& xt,
                        double t, const Predictor& p,
                        const VectorSchedule& vs) {
  check_consistent(x0, xt);
  const int m = p.value_count();
  if (vs.size() != m)
    throw std::invalid_argument("genmd4_integrand: |w| != m");
  if (xt.masked_count() == 0) return 0.0;
  std::vector<double> log_mu;
  eval_log_mu(p, xt, t, log_mu);
  std::vector<double> gam(m);
  vs.ce_weight_all(t, gam);
  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] != x0.vocab.mask_id()) continue;
    const double* row = log_mu.data() + static_cast<std::size_t>(n) * m;
    // gamma^T (x0 - mu + x0 x0^T log mu)
    double v = gam[x0.ids[n]] * (1.0 + row[x0.ids[n]]);
    for (int i = 0; i < m; ++i) v -= gam[i] * std::exp(row[i]);
    acc += v;
  }
  return acc;
}

double per_step_kl(const TokenSequence& x0, const TokenSequence& xt, double s,
                   double t, const Predictor& p, const ForwardKernel& k) {
  check_consistent(x0, xt);
  const int m = p.value_count();
  const int mask = x0.vocab.mask_id();
  if (xt.masked_count() == 0) return 0.0;
  std::vector<double> log_mu;
  eval_log_mu(p, xt, t, log_mu);

  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] != mask) continue;  // unmasked positions contribute zero
    const double* row = log_mu.data() + static_cast<std::size_t>(n) * m;
    if (!k.state_dependent()) {
      const double xi = k.unmask_prob(x0.ids[n], s, t);
      acc += -xi * row[x0.ids[n]];
    } else {
      // Two-support posterior vs the model's (m+1)-support row.
      const double xi0 = k.unmask_prob(x0.ids[n], s, t);
      double stay_model = 1.0;
      for (int i = 0; i < m; ++i)
        stay_model -= k.unmask_prob(i, s, t) * std::exp(row[i]);
      acc += -xi0 * row[x0.ids[n]];
      if (xi0 < 1.0)
        acc += (1.0 - xi0) * (std::log1p(-xi0) - std::log(stay_model));
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators

namespace {

template <typename Fn>
LossEstimate run_mc(LossKind kind, const TokenSequence& x0,
                    const ForwardKernel& k, RngStream& rng,
                    const McOptions& opt, Fn&& integrand) {
  require_clean(x0);
  if (opt.draws < 1) throw std::invalid_argument("loss: draws must be >= 1");
  LossEstimate est;
  est.estimator = kind;
  est.antithetic = opt.antithetic;
  est.per_draw.reserve(opt.draws);

  double boundary = 0.0;
  if (opt.include_boundary) {
    const auto [rec, prior] = boundary_terms(x0, k, opt.t_min);
    boundary = (rec + prior) * x0.size();
  }
  const double span = 1.0 - opt.t_min;

  for (int d = 0; d < opt.draws; ++d) {
    const double u = rng.next_unit_open();
    double v;
    if (opt.antithetic) {
      double pair = 0.0;
      for (double uu : {u, 1.0 - u}) {
        const double t = opt.t_min + span * uu;
        const TokenSequence xt = k.sample_forward(x0, t, rng);
        pair += span * integrand(xt, t);
      }
      v = 0.5 * pair;
    } else {
      const double t = opt.t_min + span * u;
      const TokenSequence xt = k.sample_forward(x0, t, rng);
      v = span * integrand(xt, t);
    }
    est.per_draw.push_back(v + boundary);
  }
  est.draws = static_cast<int>(est.per_draw.size());
  est.value = 0.0;
  for (double v : est.per_draw) est.value += v;
  est.value /= est.draws;
  return est;
}

}  // namespace

LossEstimate loss_discrete(const TokenSequence& x0, const TimeGrid& grid,
                           const Predictor& p, const ForwardKernel& k,
                           RngStream& rng, int draws, bool include_boundary) {
  require_clean(x0);
  if (grid.T < 2) throw std::invalid_argument("loss_discrete: T must be >= 2");
  if (draws < 1) throw std::invalid_argument("loss_discrete: draws >= 1");
  LossEstimate est;
  est.estimator = LossKind::discrete;
  est.per_draw.reserve(draws);

  double boundary = 0.0;
  if (include_boundary) {
    const double logm = std::log(static_cast<double>(x0.vocab.m));
    double rec = 0.0, prior = 0.0;
    for (int n = 0; n < x0.size(); ++n) {
      rec += (1.0 - k.keep_prob(x0.ids[n], grid.t(1))) * logm;
      prior += k.keep_prob(x0.ids[n], 1.0) * logm;
    }
    boundary = rec + prior;
  }

  for (int d = 0; d < draws; ++d) {
    const int i = 2 + static_cast<int>(rng.next_below(grid.T - 1));
    const double s = grid.s(i), t = grid.t(i);
    const TokenSequence xt = k.sample_forward(x0, t, rng);
    est.per_draw.push_back((grid.T - 1) * per_step_kl(x0, xt, s, t, p, k) +
                           boundary);
  }
  est.draws = draws;
  est.value = 0.0;
  for (double v : est.per_draw) est.value += v;
  est.value /= draws;
  return est;
}

LossEstimate loss_continuous_ce(const TokenSequence& x0, const Predictor& p,
                                const ForwardKernel& k, RngStream& rng,
                                const McOptions& opt) {
  return run_mc(LossKind::continuous_ce, x0, k, rng, opt,
                [&](const TokenSequence& xt, double t) {
                  return ce_integrand(x0, xt, t, p, k);
                });
}

LossEstimate loss_ctmc(const TokenSequence& x0, const Predictor& p,
                       const ForwardKernel& k, RngStream& rng,
                       const McOptions& opt) {
  double free_acc = 0.0;
  auto est = run_mc(LossKind::ctmc, x0, k, rng, opt,
                    [&](const TokenSequence& xt, double t) {
                      double tf = 0.0;
                      const double v = ctmc_integrand(x0, xt, t, p, k, &tf);
                      free_acc += (1.0 - opt.t_min) * tf;
                      return v;
                    });
  const int evals = opt.antithetic ? 2 * est.draws : est.draws;
  est.offset_known_constant = free_acc / evals;
  return est;
}

LossEstimate loss_ctmc_doubly_stochastic(const TokenSequence& x0,
                                         const Predictor& p,
                                         const ForwardKernel& k,
                                         RngStream& rng, const McOptions& opt) {
  const Schedule& sched = scalar_schedule_of(k, "loss_ctmc_doubly_stochastic");
  const int mask = x0.vocab.mask_id();
  const int m = x0.vocab.m;
  auto integrand = [&](const TokenSequence& xt, double t) {
    const double gamma = ce_weight(sched, t);
    const double beta = forward_beta(sched, t);
    TokenSequence probe = xt;
    std::vector<double> log_mu;
    double acc = 0.0;
    std::vector<double> qrow(static_cast<std::size_t>(m) + 1, 0.0);
    for (int n = 0; n < x0.size(); ++n) {
      if (xt.ids[n] == mask) {
        acc += gamma;
        continue;
      }
      // One inner draw j ~ q~(.|k), q~ proportional to the forward rate row;
      // for masking it concentrates on the mask column with Z_k = beta.
      std::fill(qrow.begin(), qrow.end(), 0.0);
      qrow[mask] = beta;
      const int j = rng.next_categorical(qrow);
      probe.ids[n] = j;
      eval_log_mu(p, probe, t, log_mu);
      acc += beta * (std::log(-gamma) +
                     log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]]);
      probe.ids[n] = xt.ids[n];
    }
    return -acc;
  };
  auto est = run_mc(LossKind::ctmc, x0, k, rng, opt, integrand);
  return est;
}

LossEstimate loss_score_entropy(const TokenSequence& x0, const ScoreView& s,
                                const ForwardKernel& k, RngStream& rng,
                                const McOptions& opt) {
  return run_mc(LossKind::score_entropy, x0, k, rng, opt,
                [&](const TokenSequence& xt, double t) {
                  return score_integrand(x0, xt, t, s, k);
                });
}

LossEstimate loss_maskgit(const TokenSequence& x0, const Predictor& p,
                          const ForwardKernel& k, RngStream& rng,
                          const McOptions& opt) {
  return run_mc(LossKind::maskgit, x0, k, rng, opt,
                [&](const TokenSequence& xt, double t) {
                  return maskgit_integrand(x0, xt, t, p, k);
                });
}

LossEstimate loss_genmd4(const TokenSequence& x0, const Predictor& p,
                         const VectorSchedule& vs, RngStream& rng,
                         const McOptions& opt) {
  const ForwardKernel k(x0.vocab, vs);
  return run_mc(LossKind::genmd4, x0, k, rng, opt,
                [&](const TokenSequence& xt, double t) {
                  return genmd4_integrand(x0, xt, t, p, vs);
                });
}

std::pair<double, double> boundary_terms(const TokenSequence& x0,
                                         const ForwardKernel& k,
                                         double t_min) {
  require_clean(x0);
  const double logm = std::log(static_cast<double>(x0.vocab.m));
  if (x0.size() == 0) return {0.0, 0.0};
  double rec = 0.0, prior = 0.0;
  for (int n = 0; n < x0.size(); ++n) {
    rec += (1.0 - k.keep_prob(x0.ids[n], t_min)) * logm;
    prior += k.keep_prob(x0.ids[n], 1.0) * logm;
  }
  return {rec / x0.size(), prior / x0.size()};
}

// ---------------------------------------------------------------------------
// Training support

double loss_value_and_grad(LossKind kind, const TokenSequence& x0,
                           const TokenSequence& xt, double t, Predictor& p,
                           const ForwardKernel* k, const VectorSchedule* vs,
                           double scale, std::span<double> grad) {
  check_consistent(x0, xt);
  // kinds whose value and gradient both live on masked positions
  if (kind != LossKind::ctmc && xt.masked_count() == 0) return 0.0;
  const int m = p.value_count();
  const int mask = x0.vocab.mask_id();
  const std::size_t nm = static_cast<std::size_t>(xt.size()) * m;
  std::vector<double> log_mu(nm);
  std::vector<double> upstream(nm, 0.0);

  switch (kind) {
    case LossKind::continuous_ce: {
      const Schedule& sched = scalar_schedule_of(*k, "loss_value_and_grad");
      const double gamma = ce_weight(sched, t);
      p.forward(xt, t, log_mu);
      double acc = 0.0;
      for (int n = 0; n < x0.size(); ++n) {
        if (xt.ids[n] != mask) continue;
        acc += log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
        upstream[static_cast<std::size_t>(n) * m + x0.ids[n]] = scale * gamma;
      }
      p.backward(upstream, grad);
      return gamma * acc;
    }
    case LossKind::score_entropy: {
      const Schedule& sched = scalar_schedule_of(*k, "loss_value_and_grad");
      const double a = alpha(sched, t);
      const double r = a / (1.0 - a);
      const double log_r = std::log(r);
      const double beta = forward_beta(sched, t);
      p.forward(xt, t, log_mu);
      double acc = 0.0;
      for (int n = 0; n < x0.size(); ++n) {
        if (xt.ids[n] != mask) continue;
        const double* row = log_mu.data() + static_cast<std::size_t>(n) * m;
        double* urow = upstream.data() + static_cast<std::size_t>(n) * m;
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
          const double log_sj = log_r + row[j];
          const double sj = std::exp(log_sj);
          double term = sj;
          if (j == x0.ids[n]) term += -r * log_sj + score_psi(r);
          sum += term;
          // d/d log mu_j of beta * (s_j - r [j = x0] log s_j)
          urow[j] = scale * beta * (sj - (j == x0.ids[n] ? r : 0.0));
        }
        acc += beta * sum;
      }
      p.backward(upstream, grad);
      return acc;
    }
    case LossKind::maskgit: {
      (void)scalar_schedule_of(*k, "loss_value_and_grad");
      p.forward(xt, t, log_mu);
      double acc = 0.0;
      for (int n = 0; n < x0.size(); ++n) {
        if (xt.ids[n] != mask) continue;
        acc += log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
        upstream[static_cast<std::size_t>(n) * m + x0.ids[n]] = -scale;
      }
      p.backward(upstream, grad);
      return -acc;
    }
    case LossKind::genmd4: {
      if (!vs) throw std::invalid_argument("genmd4 grad: missing schedule");
      std::vector<double> gam(m);
      vs->ce_weight_all(t, gam);
      p.forward(xt, t, log_mu);
      double acc = 0.0;
      for (int n = 0; n < x0.size(); ++n) {
        if (xt.ids[n] != mask) continue;
        const double* row = log_mu.data() + static_cast<std::size_t>(n) * m;
        double* urow = upstream.data() + static_cast<std::size_t>(n) * m;
        const int v0 = x0.ids[n];
        double v = gam[v0] * (1.0 + row[v0]);
        for (int i = 0; i < m; ++i) {
          const double mu_i = std::exp(row[i]);
          v -= gam[i] * mu_i;
          urow[i] = scale * (-gam[i] * mu_i);
        }
        urow[v0] += scale * gam[v0];
        acc += v;
      }
      p.backward(upstream, grad);
      return acc;
    }
    case LossKind::ctmc: {
      const Schedule& sched = scalar_schedule_of(*k, "loss_value_and_grad");
      const double gamma = ce_weight(sched, t);
      const double beta = forward_beta(sched, t);
      const double log_rate = std::log(-gamma);
      TokenSequence probe = xt;
      double acc = 0.0;
      for (int n = 0; n < x0.size(); ++n) {
        if (xt.ids[n] == mask) {
          acc += -gamma;
          continue;
        }
        probe.ids[n] = mask;
        p.forward(probe, t, log_mu);
        acc -= beta * (log_rate +
                       log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]]);
        std::fill(upstream.begin(), upstream.end(), 0.0);
        upstream[static_cast<std::size_t>(n) * m + x0.ids[n]] = -scale * beta;
        p.backward(upstream, grad);
        probe.ids[n] = xt.ids[n];
      }
      return acc;
    }
    case LossKind::discrete:
      throw std::invalid_argument(
          "loss_value_and_grad: use discrete_value_and_grad for L_T");
  }
  throw std::logic_error("loss_value_and_grad: bad kind");
}

double discrete_value_and_grad(const TokenSequence& x0, const TokenSequence& xt,
                               const TimeGrid& grid, int i, Predictor& p,
                               const ForwardKernel& k, double scale,
                               std::span<double> grad) {
  check_consistent(x0, xt);
  if (k.state_dependent())
    throw std::invalid_argument("discrete grad: scalar schedules only");
  if (i < 2 || i > grid.T)
    throw std::invalid_argument("discrete grad: i outside [2, T]");
  const int m = p.value_count();
  const int mask = x0.vocab.mask_id();
  const double s = grid.s(i), t = grid.t(i);
  if (xt.masked_count() == 0) return 0.0;
  const std::size_t nm = static_cast<std::size_t>(xt.size()) * m;
  std::vector<double> log_mu(nm);
  std::vector<double> upstream(nm, 0.0);
  p.forward(xt, t, log_mu);
  double acc = 0.0;
  for (int n = 0; n < x0.size(); ++n) {
    if (xt.ids[n] != mask) continue;
    const double xi = k.unmask_prob(x0.ids[n], s, t);
    acc += -xi * log_mu[static_cast<std::size_t>(n) * m + x0.ids[n]];
    upstream[static_cast<std::size_t>(n) * m + x0.ids[n]] =
        -scale * (grid.T - 1) * xi;
  }
  p.backward(upstream, grad);
  return (grid.T - 1) * acc;
}

}  // namespace mdc
