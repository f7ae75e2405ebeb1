#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mdc/forward.hpp"
#include "mdc/predictor.hpp"
#include "mdc/rng.hpp"

namespace mdc {

// Estimator identities, reported as L_T, L_inf_ce, L_ctmc, L_score,
// L_maskgit, L_genmd4.
enum class LossKind {
  discrete,
  continuous_ce,
  ctmc,
  score_entropy,
  maskgit,
  genmd4,
};

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(std::string_view name);

struct LossEstimate {
  LossKind estimator = LossKind::continuous_ce;
  double value = 0.0;  // nats per sequence; always mean(per_draw)
  int draws = 0;
  bool antithetic = false;  // per_draw entries are reflected-pair means
  std::vector<double> per_draw;
  // For forms defined only up to a theta-independent constant (L_ctmc):
  // the theta-free component included in value, estimated on the same draws.
  std::optional<double> offset_known_constant;

  double variance() const;   // sample variance of per_draw
  double std_error() const;  // of the mean
};

struct McOptions {
  int draws = 1;
  bool antithetic = false;
  double t_min = kTimeFloor;
  bool include_boundary = false;  // add reconstruction + prior per sequence
};

// Uniform time grid for the discrete-time bound: s(i) = (i-1)/T, t(i) = i/T.
struct TimeGrid {
  int T = 2;
  double s(int i) const { return static_cast<double>(i - 1) / T; }
  double t(int i) const { return static_cast<double>(i) / T; }
};

// Constrained score view of a mean-parameterization model (masked states):
// s_theta(m, t)_j = alpha_t / (1 - alpha_t) * mu_theta(m, t)_j, which sums to
// alpha_t / (1 - alpha_t) over the clean values by construction. The scale
// factor exists solely so the selfcheck can break the constraint on purpose.
class ScoreView {
 public:
  ScoreView(const Predictor& p, const Schedule& sched, double scale = 1.0)
      : pred_(p), sched_(sched), scale_(scale) {}

  const Predictor& predictor() const { return pred_; }
  double ratio(double t) const;  // scale * alpha/(1-alpha)
  double scale() const { return scale_; }
  // s_theta for one masked position of xt, over the m clean values.
  void score_at(const TokenSequence& xt, double t, int pos,
                std::span<double> out) const;

 private:
  const Predictor& pred_;
  Schedule sched_;
  double scale_;
};

// --- Integrands ------------------------------------------------------------
// Deterministic per-(t, x_t) integrand values shared by the Monte Carlo
// estimators and the enumeration/quadrature oracles. Every integrand is the
// per-sequence contribution whose expectation over x_t ~ q(.|x0), integrated
// over t, yields the loss.

double ce_integrand(const TokenSequence& x0, const TokenSequence& xt, double t,
                    const Predictor& p, const ForwardKernel& k);

// CTMC-rate form, Eq-(8)-style; theta_free (optional) receives the part of
// the returned value that does not depend on the model.
double ctmc_integrand(const TokenSequence& x0, const TokenSequence& xt,
                      double t, const Predictor& p, const ForwardKernel& k,
                      double* theta_free = nullptr);

// Score-entropy form evaluated literally (s - r log s + psi(r) per target).
double score_integrand(const TokenSequence& x0, const TokenSequence& xt,
                       double t, const ScoreView& s, const ForwardKernel& k);

double maskgit_integrand(const TokenSequence& x0, const TokenSequence& xt,
                         double t, const Predictor& p, const ForwardKernel& k);

double genmd4_integrand(const TokenSequence& x0, const TokenSequence& xt,
                        double t, const Predictor& p, const VectorSchedule& vs);

// psi(y) = y log y - y (with psi(0) = 0).
double score_psi(double y);

// KL(q(x_s|x_t,x_0) || p_theta(x_s|x_t)) summed over positions; zero at
// positions where x_t is unmasked.
double per_step_kl(const TokenSequence& x0, const TokenSequence& xt, double s,
                   double t, const Predictor& p, const ForwardKernel& k);

// --- Monte Carlo estimators -------------------------------------------------

LossEstimate loss_discrete(const TokenSequence& x0, const TimeGrid& grid,
                           const Predictor& p, const ForwardKernel& k,
                           RngStream& rng, int draws,
                           bool include_boundary = false);

LossEstimate loss_continuous_ce(const TokenSequence& x0, const Predictor& p,
                                const ForwardKernel& k, RngStream& rng,
                                const McOptions& opt = {});

LossEstimate loss_ctmc(const TokenSequence& x0, const Predictor& p,
                       const ForwardKernel& k, RngStream& rng,
                       const McOptions& opt = {});

// Variance-comparison baseline: estimates the inner rate sum with one state
// draw j ~ q~(.|k) instead of the analytic sum. Never a training objective.
LossEstimate loss_ctmc_doubly_stochastic(const TokenSequence& x0,
                                         const Predictor& p,
                                         const ForwardKernel& k,
                                         RngStream& rng,
                                         const McOptions& opt = {});

LossEstimate loss_score_entropy(const TokenSequence& x0, const ScoreView& s,
                                const ForwardKernel& k, RngStream& rng,
                                const McOptions& opt = {});

LossEstimate loss_maskgit(const TokenSequence& x0, const Predictor& p,
                          const ForwardKernel& k, RngStream& rng,
                          const McOptions& opt = {});

LossEstimate loss_genmd4(const TokenSequence& x0, const Predictor& p,
                         const VectorSchedule& vs, RngStream& rng,
                         const McOptions& opt = {});

// Per-token (reconstruction, prior KL) boundary terms of the full negative
// ELBO: (1 - alpha_{t_min}) log m and alpha_1 log m, averaged over tokens
// for state-dependent schedules.
std::pair<double, double> boundary_terms(const TokenSequence& x0,
                                         const ForwardKernel& k, double t_min);

// --- Training support --------------------------------------------------------
// Evaluates the integrand for one draw and accumulates scale * d(integrand)/
// d(params) into grad. Returns the integrand value. `k` is required for all
// kinds except genmd4, which uses `vs`.
double loss_value_and_grad(LossKind kind, const TokenSequence& x0,
                           const TokenSequence& xt, double t, Predictor& p,
                           const ForwardKernel* k, const VectorSchedule* vs,
                           double scale, std::span<double> grad);

// L_T counterpart: one (i, x_t) draw of the discrete-time bound, with the
// (T-1) importance factor folded into both value and gradient.
double discrete_value_and_grad(const TokenSequence& x0, const TokenSequence& xt,
                               const TimeGrid& grid, int i, Predictor& p,
                               const ForwardKernel& k, double scale,
                               std::span<double> grad);

}  // namespace mdc
