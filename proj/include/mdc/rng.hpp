#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace mdc {

// Counter-based pseudo-random stream (a SplitMix64 walk). Streams are never
// split at runtime; every consumer derives its own stream up front via
//
//   derive_stream(seed, label, index)
//
// where the label names the purpose ("train.batch", "eval", ...) and the
// index distinguishes parallel consumers. Derivation rule:
//
//   state0 = mix64(mix64(seed ^ fnv1a64(label)) + index * 0x9E3779B97F4A7C15)
//
// so any (seed, label, index) triple yields a reproducible, independent
// stream regardless of which worker consumes it.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();

  // Uniform in (0, 1); never returns an endpoint.
  double next_unit_open();

  // Uniform integer in [0, n), n > 0.
  std::uint32_t next_below(std::uint32_t n);

  // Standard normal via Box-Muller (one value per pair of uniforms).
  double next_normal();

  // Inverse-CDF draw over nonnegative weights (need not be normalized).
  int next_categorical(std::span<const double> weights);

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_ = 0;
};

RngStream derive_stream(std::uint64_t seed, std::string_view label,
                        std::uint64_t index = 0);

}  // namespace mdc
