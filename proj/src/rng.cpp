#include "mdc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdc {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_unit_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint32_t RngStream::next_below(std::uint32_t n) {
  if (n == 0) throw std::invalid_argument("next_below: n must be positive");
  return static_cast<std::uint32_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double RngStream::next_normal() {
  const double u1 = next_unit_open();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

int RngStream::next_categorical(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("next_categorical: empty");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("next_categorical: zero mass");
  double u = next_double() * total;
  int last_positive = 0;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return last_positive;  // guards against accumulated rounding
}

RngStream derive_stream(std::uint64_t seed, std::string_view label,
                        std::uint64_t index) {
  const std::uint64_t k = mix64(seed ^ fnv1a64(label));
  return RngStream(mix64(k + index * kGolden));
}

}  // namespace mdc
