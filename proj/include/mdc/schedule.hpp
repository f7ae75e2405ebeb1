#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace mdc {

// Default endpoint shift and the minimum time used by Monte Carlo and
// quadrature integrators. alpha stays in [eps, 1 - eps] under the shift, so
// the cross-entropy weight alpha'/(1 - alpha) is bounded on [t_min, 1].
inline constexpr double kDefaultEps = 1e-4;
inline constexpr double kTimeFloor = 1e-5;

enum class ScheduleKind { linear, polynomial, geometric, cosine };

const char* schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(std::string_view name);

// Scalar masking schedule alpha(t): the probability that a token is still
// unmasked at time t. Strictly decreasing on [0,1] with alpha(0)=1 and
// alpha(1)=0 for linear/polynomial/cosine; the geometric schedule has
// alpha(0)=exp(-beta_min), alpha(1)=exp(-beta_max). An endpoint shift
// eps > 0 remaps alpha to (1-2*eps)*alpha + eps.
struct Schedule {
  ScheduleKind kind = ScheduleKind::linear;
  double poly_w = 2.0;     // polynomial exponent, > 0
  double beta_min = 1e-5;  // geometric only
  double beta_max = 20.0;  // geometric only
  double eps = 0.0;        // endpoint shift in [0, 0.01]

  static Schedule linear(double eps = 0.0);
  static Schedule polynomial(double w, double eps = 0.0);
  static Schedule geometric(double beta_min = 1e-5, double beta_max = 20.0,
                            double eps = 0.0);
  static Schedule cosine(double eps = 0.0);
};

// alpha(t); domain error outside [0,1].
double alpha(const Schedule& s, double t);

// Analytic d alpha / d t (matches central finite differences).
double alpha_prime(const Schedule& s, double t);

// Cross-entropy loss weight alpha'(t) / (1 - alpha(t)); strictly negative.
// Throws when alpha(t) == 1 (t = 0 with eps = 0).
double ce_weight(const Schedule& s, double t);

// Log signal-to-noise ratio logit(alpha(t)) and its inverse in t.
double log_snr(const Schedule& s, double t);
double log_snr_inv(const Schedule& s, double lambda);

// Forward CTMC rate beta(t) = -alpha'(t) / alpha(t).
double forward_beta(const Schedule& s, double t);

// State-dependent schedule alpha_{t,i} = 1 - t^{w_i}, one learnable exponent
// per non-mask token value (the mask slot has no schedule of its own).
struct VectorSchedule {
  std::vector<double> w;

  explicit VectorSchedule(std::vector<double> exponents);
  int size() const { return static_cast<int>(w.size()); }

  double alpha(double t, int value) const;
  double alpha_prime(double t, int value) const;  // -w_i t^{w_i - 1}
  double ce_weight(double t, int value) const;    // exactly -w_i / t

  void alpha_all(double t, std::span<double> out) const;
  void ce_weight_all(double t, std::span<double> out) const;
};

}  // namespace mdc
