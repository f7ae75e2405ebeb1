#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <numbers>

#include "mdc/rng.hpp"
#include "mdc/schedule.hpp"

using namespace mdc;

namespace {

// Central finite differences, the derivative oracle.
double fd_alpha(const Schedule& s, double t, double h = 1e-6) {
  return (alpha(s, t + h) - alpha(s, t - h)) / (2.0 * h);
}

const Schedule kAll[] = {
    Schedule::linear(0.0),
    Schedule::polynomial(2.0, 0.0),
    Schedule::polynomial(0.5, 0.0),
    Schedule::geometric(1e-5, 20.0, 0.0),
    Schedule::cosine(0.0),
    Schedule::linear(1e-4),
    Schedule::cosine(1e-3),
};

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("alpha endpoint values") {
  CHECK(alpha(Schedule::linear(0.0), 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(alpha(Schedule::cosine(0.0), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(alpha(Schedule::cosine(0.0), 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(alpha(Schedule::geometric(1e-5, 20.0, 0.0), 1.0) ==
        doctest::Approx(std::exp(-20.0)).epsilon(1e-12));
  CHECK(alpha(Schedule::geometric(1e-5, 20.0, 0.0), 0.0) ==
        doctest::Approx(std::exp(-1e-5)).epsilon(1e-12));
  for (const auto& s : kAll) {
    CHECK(alpha(s, 0.0) <= 1.0 - s.eps + 1e-15);
    CHECK(alpha(s, 1.0) >= s.eps - 1e-15);
  }
}

TEST_CASE("alpha domain errors") {
  CHECK_THROWS_AS(alpha(Schedule::linear(0.0), -0.01), std::domain_error);
  CHECK_THROWS_AS(alpha(Schedule::linear(0.0), 1.01), std::domain_error);
  CHECK_THROWS_AS((void)Schedule::polynomial(-1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)Schedule::linear(0.5), std::invalid_argument);
}

TEST_CASE("alpha_prime closed forms") {
  CHECK(alpha_prime(Schedule::linear(0.0), 0.3) == doctest::Approx(-1.0));
  CHECK(alpha_prime(Schedule::polynomial(2.0, 0.0), 0.5) ==
        doctest::Approx(-1.0).epsilon(1e-15));
  for (double t = 0.1; t < 0.95; t += 0.1)
    CHECK(alpha_prime(Schedule::cosine(0.0), t) ==
          doctest::Approx(fd_alpha(Schedule::cosine(0.0), t)).epsilon(1e-6));
}

TEST_CASE("alpha_prime matches finite differences everywhere") {
  RngStream rng = derive_stream(1, "sched.fd");
  for (const auto& s : kAll) {
    for (int i = 0; i < 1000; ++i) {
      const double t = 0.01 + 0.98 * rng.next_double();
      const double analytic = alpha_prime(s, t);
      const double numeric = fd_alpha(s, t);
      CHECK(std::abs(analytic - numeric) <=
            1e-5 * std::max(1e-12, std::abs(numeric)));
    }
  }
}

TEST_CASE("ce_weight values from the closed-form table") {
  CHECK(ce_weight(Schedule::linear(0.0), 0.25) == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(ce_weight(Schedule::polynomial(3.0, 0.0), 0.5) ==
        doctest::Approx(-6.0).epsilon(1e-12));
  CHECK(ce_weight(Schedule::cosine(0.0), 0.5) ==
        doctest::Approx(-std::numbers::pi / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(ce_weight(Schedule::linear(0.0), 0.0), std::domain_error);
}

TEST_CASE("ce_weight is negative and satisfies the rearrangement identity") {
  RngStream rng = derive_stream(2, "sched.id");
  for (const auto& s : kAll) {
    for (int i = 0; i < 200; ++i) {
      const double t = 0.001 + 0.998 * rng.next_double();
      const double w = ce_weight(s, t);
      CHECK(w < 0.0);
      CHECK(std::abs(w * (1.0 - alpha(s, t)) - alpha_prime(s, t)) <= 1e-12);
    }
  }
}

TEST_CASE("log_snr basics and inverse") {
  const Schedule lin = Schedule::linear(0.0);
  CHECK(log_snr(lin, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(log_snr(lin, 0.9) == doctest::Approx(std::log(1.0 / 9.0)).epsilon(1e-12));
  CHECK(log_snr_inv(lin, log_snr(lin, 0.37)) == doctest::Approx(0.37).epsilon(1e-9));
  CHECK_THROWS_AS(log_snr(lin, 0.0), std::domain_error);
}

TEST_CASE("log_snr strictly decreasing, inverse round-trips") {
  RngStream rng = derive_stream(3, "sched.snr");
  for (const auto& s : kAll) {
    double prev = log_snr(s, 0.001);
    for (double t = 0.05; t < 1.0 - 1e-9; t += 0.05) {
      const double cur = log_snr(s, t);
      CHECK(cur < prev);
      prev = cur;
    }
    for (int i = 0; i < 100; ++i) {
      const double t = 0.001 + 0.998 * rng.next_double();
      CHECK(std::abs(log_snr_inv(s, log_snr(s, t)) - t) <= 1e-9);
    }
  }
}

TEST_CASE("vector schedule values") {
  const VectorSchedule ones({1.0, 1.0, 1.0});
  std::vector<double> a(3);
  ones.alpha_all(0.5, a);
  for (double v : a) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  const VectorSchedule vs({2.0, 1.0});
  std::vector<double> w(2);
  vs.ce_weight_all(0.5, w);
  CHECK(w[0] == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(-2.0).epsilon(1e-15));

  const VectorSchedule half({1.5});
  CHECK(half.alpha(0.25, 0) == doctest::Approx(0.875).epsilon(1e-12));

  CHECK_THROWS_AS(VectorSchedule({1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(VectorSchedule({-2.0}), std::invalid_argument);
}

TEST_CASE("vector schedule with equal exponents matches scalar polynomial") {
  const double w = 1.7;
  const VectorSchedule vs({w, w, w, w});
  const Schedule poly = Schedule::polynomial(w, 0.0);
  RngStream rng = derive_stream(4, "sched.vec");
  for (int i = 0; i < 200; ++i) {
    const double t = 0.001 + 0.998 * rng.next_double();
    for (int v = 0; v < 4; ++v) {
      CHECK(vs.alpha(t, v) == alpha(poly, t));
      CHECK(vs.alpha_prime(t, v) == alpha_prime(poly, t));
      // the scalar route computes alpha'/(1 - alpha), which loses a few
      // ulps to cancellation at small t; the vector route is exactly -w/t
      CHECK(std::abs(vs.ce_weight(t, v) - ce_weight(poly, t)) <=
            1e-10 * std::abs(ce_weight(poly, t)));
    }
  }
}

TEST_CASE("vector endpoints") {
  const VectorSchedule vs({0.7, 3.0});
  for (int v = 0; v < 2; ++v) {
    CHECK(vs.alpha(0.0, v) == 1.0);
    CHECK(vs.alpha(1.0, v) == 0.0);
  }
}

}
