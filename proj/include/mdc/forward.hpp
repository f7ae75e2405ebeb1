#pragma once

#include <optional>
#include <vector>

#include "mdc/rng.hpp"
#include "mdc/schedule.hpp"
#include "mdc/types.hpp"

namespace mdc {

// Forward masking kernel over m+1 states. All matrices are diag + rank-one,
// so they are kept implicit: marginals, transitions and reverse posteriors
// are computed entrywise from the schedule. Dense materialization exists
// only as a test utility (see materialize_* below).
class ForwardKernel {
 public:
  ForwardKernel(Vocabulary v, Schedule s);
  ForwardKernel(Vocabulary v, VectorSchedule vs);

  const Vocabulary& vocab() const { return vocab_; }
  bool state_dependent() const { return vector_.has_value(); }
  const Schedule* scalar_schedule() const {
    return scalar_ ? &*scalar_ : nullptr;
  }
  const VectorSchedule* vector_schedule() const {
    return vector_ ? &*vector_ : nullptr;
  }

  // Survival probability of value `x0` at time t: alpha_t or alpha_{t,x0}.
  double keep_prob(int x0, double t) const;
  // Cross-entropy weight gamma for value `x0`: alpha'/(1 - alpha).
  double weight(int x0, double t) const;
  // Unmasking probability of the reverse posterior,
  // xi_{s,t} = (alpha_s - alpha_t) / (1 - alpha_t), evaluated for value x0.
  double unmask_prob(int x0, double s, double t) const;

  // q(x_t | x_0) as a length-(m+1) probability vector. x0 must be clean.
  std::vector<double> marginal(int x0, double t) const;
  // q(x_t | x_s) row for state xs; requires s < t.
  std::vector<double> transition(int xs, double s, double t) const;
  // q(x_s | x_t, x_0); requires xt in {x0, mask}.
  std::vector<double> reverse_posterior(int xt, int x0, double s,
                                        double t) const;

  // Independent per-position masking of a clean sequence.
  TokenSequence sample_forward(const TokenSequence& x0, double t,
                               RngStream& rng) const;

 private:
  Vocabulary vocab_;
  std::optional<Schedule> scalar_;
  std::optional<VectorSchedule> vector_;
};

// Forward transition-rate matrix Q(t) = beta(t) (1 e_m^T - I) (per-value
// beta for state-dependent schedules). Zero row sums; only row j != m has
// entries: -beta_j on the diagonal and +beta_j into the mask column.
struct ForwardRate {
  int m = 0;
  std::vector<double> beta;  // size 1 for scalar schedules, else m

  int dim() const { return m + 1; }
  double entry(int j, int k) const;
};

// Reverse rate given x0: R^{x0}(t) = -gamma e_m (x0 - e_m)^T with
// gamma = alpha'/(1-alpha) < 0. Only the mask row is nonzero.
struct ReverseRate {
  int m = 0;
  int x0 = 0;
  double rate = 0.0;  // -gamma > 0

  int dim() const { return m + 1; }
  double entry(int j, int k) const;
};

ForwardRate forward_rate(const ForwardKernel& k, double t);
ReverseRate reverse_rate_given_x0(const ForwardKernel& k, int x0, double t);

// Dense (m+1)^2 row-major materializations, for tests and selfcheck only.
std::vector<double> materialize_transition(const ForwardKernel& k, double s,
                                           double t);
std::vector<double> materialize_reverse_posterior(const ForwardKernel& k,
                                                  int x0, double s, double t);
std::vector<double> materialize(const ForwardRate& q);
std::vector<double> materialize(const ReverseRate& r);

}  // namespace mdc
