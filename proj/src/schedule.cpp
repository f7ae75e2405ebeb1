#include "mdc/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdc {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::domain_error("schedule: t outside [0,1]");
}

// Unshifted alpha.
double raw_alpha(const Schedule& s, double t) {
  switch (s.kind) {
    case ScheduleKind::linear:
      return 1.0 - t;
    case ScheduleKind::polynomial:
      return 1.0 - std::pow(t, s.poly_w);
    case ScheduleKind::geometric:
      return std::exp(-std::pow(s.beta_min, 1.0 - t) * std::pow(s.beta_max, t));
    case ScheduleKind::cosine:
      return 1.0 - std::cos(kHalfPi * (1.0 - t));
  }
  throw std::logic_error("schedule: bad kind");
}

double raw_alpha_prime(const Schedule& s, double t) {
  switch (s.kind) {
    case ScheduleKind::linear:
      return -1.0;
    case ScheduleKind::polynomial:
      return -s.poly_w * std::pow(t, s.poly_w - 1.0);
    case ScheduleKind::geometric: {
      const double g = std::pow(s.beta_min, 1.0 - t) * std::pow(s.beta_max, t);
      return -g * std::log(s.beta_max / s.beta_min) * std::exp(-g);
    }
    case ScheduleKind::cosine:
      return -kHalfPi * std::sin(kHalfPi * (1.0 - t));
  }
  throw std::logic_error("schedule: bad kind");
}

// Inverse of raw_alpha; a is assumed reachable by the kind.
double raw_alpha_inv(const Schedule& s, double a) {
  switch (s.kind) {
    case ScheduleKind::linear:
      return 1.0 - a;
    case ScheduleKind::polynomial:
      return std::pow(1.0 - a, 1.0 / s.poly_w);
    case ScheduleKind::geometric: {
      const double g = -std::log(a);
      return (std::log(g) - std::log(s.beta_min)) /
             (std::log(s.beta_max) - std::log(s.beta_min));
    }
    case ScheduleKind::cosine:
      return 1.0 - std::acos(1.0 - a) / kHalfPi;
  }
  throw std::logic_error("schedule: bad kind");
}

void validate(const Schedule& s) {
  if (!(s.eps >= 0.0 && s.eps <= 0.01))
    throw std::invalid_argument("schedule: eps outside [0, 0.01]");
  if (s.kind == ScheduleKind::polynomial && !(s.poly_w > 0.0))
    throw std::invalid_argument("schedule: polynomial exponent must be > 0");
  if (s.kind == ScheduleKind::geometric &&
      !(s.beta_min > 0.0 && s.beta_max > s.beta_min))
    throw std::invalid_argument("schedule: need 0 < beta_min < beta_max");
}

}  // namespace

const char* schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::polynomial: return "polynomial";
    case ScheduleKind::geometric: return "geometric";
    case ScheduleKind::cosine: return "cosine";
  }
  return "?";
}

ScheduleKind schedule_kind_from_name(std::string_view name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "polynomial") return ScheduleKind::polynomial;
  if (name == "geometric") return ScheduleKind::geometric;
  if (name == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind: " + std::string(name));
}

Schedule Schedule::linear(double eps) {
  Schedule s;
  s.kind = ScheduleKind::linear;
  s.eps = eps;
  validate(s);
  return s;
}

Schedule Schedule::polynomial(double w, double eps) {
  Schedule s;
  s.kind = ScheduleKind::polynomial;
  s.poly_w = w;
  s.eps = eps;
  validate(s);
  return s;
}

Schedule Schedule::geometric(double beta_min, double beta_max, double eps) {
  Schedule s;
  s.kind = ScheduleKind::geometric;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.eps = eps;
  validate(s);
  return s;
}

Schedule Schedule::cosine(double eps) {
  Schedule s;
  s.kind = ScheduleKind::cosine;
  s.eps = eps;
  validate(s);
  return s;
}

double alpha(const Schedule& s, double t) {
  check_time(t);
  return (1.0 - 2.0 * s.eps) * raw_alpha(s, t) + s.eps;
}

double alpha_prime(const Schedule& s, double t) {
  check_time(t);
  return (1.0 - 2.0 * s.eps) * raw_alpha_prime(s, t);
}

double ce_weight(const Schedule& s, double t) {
  const double a = alpha(s, t);
  if (!(a < 1.0))
    throw std::domain_error("ce_weight: singular at alpha(t) = 1");
  return alpha_prime(s, t) / (1.0 - a);
}

double log_snr(const Schedule& s, double t) {
  const double a = alpha(s, t);
  if (!(a > 0.0 && a < 1.0))
    throw std::domain_error("log_snr: alpha at an endpoint");
  return std::log(a) - std::log1p(-a);
}

double log_snr_inv(const Schedule& s, double lambda) {
  if (!std::isfinite(lambda))
    throw std::domain_error("log_snr_inv: lambda must be finite");
  // Stable sigmoid.
  const double a = lambda >= 0.0 ? 1.0 / (1.0 + std::exp(-lambda))
                                 : std::exp(lambda) / (1.0 + std::exp(lambda));
  double raw = (a - s.eps) / (1.0 - 2.0 * s.eps);
  const double lo = raw_alpha(s, 1.0), hi = raw_alpha(s, 0.0);
  if (raw < lo || raw > hi) {
    if (raw < lo - 1e-12 || raw > hi + 1e-12)
      throw std::domain_error("log_snr_inv: lambda not reachable");
    raw = std::min(std::max(raw, lo), hi);
  }
  const double t = raw_alpha_inv(s, raw);
  return std::min(std::max(t, 0.0), 1.0);
}

double forward_beta(const Schedule& s, double t) {
  const double a = alpha(s, t);
  if (!(a > 0.0)) throw std::domain_error("forward_beta: alpha(t) = 0");
  return -alpha_prime(s, t) / a;
}

VectorSchedule::VectorSchedule(std::vector<double> exponents)
    : w(std::move(exponents)) {
  if (w.empty()) throw std::invalid_argument("VectorSchedule: empty w");
  for (double wi : w)
    if (!(wi > 0.0))
      throw std::invalid_argument("VectorSchedule: all w_i must be > 0");
}

double VectorSchedule::alpha(double t, int value) const {
  check_time(t);
  return 1.0 - std::pow(t, w[value]);
}

double VectorSchedule::alpha_prime(double t, int value) const {
  check_time(t);
  return -w[value] * std::pow(t, w[value] - 1.0);
}

double VectorSchedule::ce_weight(double t, int value) const {
  if (!(t > 0.0 && t <= 1.0))
    throw std::domain_error("VectorSchedule::ce_weight: t outside (0,1]");
  return -w[value] / t;
}

void VectorSchedule::alpha_all(double t, std::span<double> out) const {
  for (int i = 0; i < size(); ++i) out[i] = alpha(t, i);
}

void VectorSchedule::ce_weight_all(double t, std::span<double> out) const {
  for (int i = 0; i < size(); ++i) out[i] = ce_weight(t, i);
}

}  // namespace mdc
