#include "mdc/forward.hpp"

#include <stdexcept>

namespace mdc {

namespace {

void check_order(double s, double t) {
  if (!(s >= 0.0 && s < t && t <= 1.0))
    throw std::invalid_argument("forward: need 0 <= s < t <= 1");
}

}  // namespace

ForwardKernel::ForwardKernel(Vocabulary v, Schedule s)
    : vocab_(v), scalar_(s) {}

ForwardKernel::ForwardKernel(Vocabulary v, VectorSchedule vs)
    : vocab_(v), vector_(std::move(vs)) {
  if (vector_->size() != vocab_.m)
    throw std::invalid_argument("ForwardKernel: |w| must equal m");
}

double ForwardKernel::keep_prob(int x0, double t) const {
  if (!vocab_.valid_clean_id(x0))
    throw std::invalid_argument("keep_prob: x0 must be a clean value");
  return scalar_ ? alpha(*scalar_, t) : vector_->alpha(t, x0);
}

double ForwardKernel::weight(int x0, double t) const {
  if (!vocab_.valid_clean_id(x0))
    throw std::invalid_argument("weight: x0 must be a clean value");
  return scalar_ ? ce_weight(*scalar_, t) : vector_->ce_weight(t, x0);
}

double ForwardKernel::unmask_prob(int x0, double s, double t) const {
  check_order(s, t);
  const double as = keep_prob(x0, s);
  const double at = keep_prob(x0, t);
  return (as - at) / (1.0 - at);
}

std::vector<double> ForwardKernel::marginal(int x0, double t) const {
  if (x0 == vocab_.mask_id())
    throw std::invalid_argument("marginal: clean datum cannot be the mask");
  const double a = keep_prob(x0, t);
  std::vector<double> p(vocab_.m + 1, 0.0);
  p[x0] = a;
  p[vocab_.mask_id()] = 1.0 - a;
  return p;
}

std::vector<double> ForwardKernel::transition(int xs, double s,
                                              double t) const {
  check_order(s, t);
  if (!vocab_.valid_id(xs)) throw std::invalid_argument("transition: bad xs");
  std::vector<double> p(vocab_.m + 1, 0.0);
  if (xs == vocab_.mask_id()) {
    p[xs] = 1.0;  // mask is absorbing
    return p;
  }
  const double keep = keep_prob(xs, t) / keep_prob(xs, s);
  p[xs] = keep;
  p[vocab_.mask_id()] = 1.0 - keep;
  return p;
}

std::vector<double> ForwardKernel::reverse_posterior(int xt, int x0, double s,
                                                     double t) const {
  check_order(s, t);
  if (!vocab_.valid_clean_id(x0))
    throw std::invalid_argument("reverse_posterior: x0 must be clean");
  if (xt != x0 && xt != vocab_.mask_id())
    throw std::invalid_argument(
        "reverse_posterior: xt inconsistent with x0 (must be x0 or mask)");
  std::vector<double> p(vocab_.m + 1, 0.0);
  if (xt != vocab_.mask_id()) {
    p[xt] = 1.0;  // unmasked states are absorbing backward
    return p;
  }
  const double xi = unmask_prob(x0, s, t);
  p[x0] = xi;
  p[vocab_.mask_id()] = 1.0 - xi;
  return p;
}

TokenSequence ForwardKernel::sample_forward(const TokenSequence& x0, double t,
                                            RngStream& rng) const {
  require_clean(x0);
  TokenSequence xt = x0;
  for (int n = 0; n < x0.size(); ++n) {
    const double keep = keep_prob(x0.ids[n], t);
    if (rng.next_double() >= keep) xt.ids[n] = vocab_.mask_id();
  }
  return xt;
}

double ForwardRate::entry(int j, int k) const {
  if (j == m) return 0.0;
  const double b = beta.size() == 1 ? beta[0] : beta[j];
  if (k == m) return b;
  if (k == j) return -b;
  return 0.0;
}

double ReverseRate::entry(int j, int k) const {
  if (j != m) return 0.0;
  if (k == x0) return rate;
  if (k == m) return -rate;
  return 0.0;
}

ForwardRate forward_rate(const ForwardKernel& k, double t) {
  ForwardRate q;
  q.m = k.vocab().m;
  if (const Schedule* s = k.scalar_schedule()) {
    q.beta.push_back(forward_beta(*s, t));
  } else {
    const VectorSchedule& vs = *k.vector_schedule();
    for (int i = 0; i < q.m; ++i)
      q.beta.push_back(-vs.alpha_prime(t, i) / vs.alpha(t, i));
  }
  return q;
}

ReverseRate reverse_rate_given_x0(const ForwardKernel& k, int x0, double t) {
  ReverseRate r;
  r.m = k.vocab().m;
  r.x0 = x0;
  r.rate = -k.weight(x0, t);
  return r;
}

std::vector<double> materialize_transition(const ForwardKernel& k, double s,
                                           double t) {
  const int d = k.vocab().m + 1;
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (int j = 0; j < d; ++j) {
    auto row = k.transition(j, s, t);
    for (int c = 0; c < d; ++c) out[j * d + c] = row[c];
  }
  return out;
}

std::vector<double> materialize_reverse_posterior(const ForwardKernel& k,
                                                  int x0, double s, double t) {
  const int d = k.vocab().m + 1;
  std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
  for (int j = 0; j < d; ++j) {
    if (j != x0 && j != k.vocab().mask_id()) {
      out[j * d + j] = 1.0;  // unreachable forward states; identity row
      continue;
    }
    auto row = k.reverse_posterior(j, x0, s, t);
    for (int c = 0; c < d; ++c) out[j * d + c] = row[c];
  }
  return out;
}

std::vector<double> materialize(const ForwardRate& q) {
  const int d = q.dim();
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) out[j * d + k] = q.entry(j, k);
  return out;
}

std::vector<double> materialize(const ReverseRate& r) {
  const int d = r.dim();
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) out[j * d + k] = r.entry(j, k);
  return out;
}

}  // namespace mdc
