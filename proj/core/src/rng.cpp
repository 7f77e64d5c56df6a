#include "featdp/rng.hpp"

#include <cmath>
#include <numbers>

namespace featdp {

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t absorb(std::uint64_t state, std::uint64_t word) {
  return mix64(state ^ mix64(word));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, StreamPurpose purpose,
                     std::uint64_t step, std::uint64_t lane) {
  std::uint64_t k = mix64(seed);
  k = absorb(k, static_cast<std::uint64_t>(purpose));
  k = absorb(k, step);
  k = absorb(k, lane);
  key_ = k;
}

std::uint64_t RngStream::next_u64() { return mix64(key_ ^ mix64(counter_++)); }

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = next_uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  cached_gaussian_ = radius * std::sin(angle);
  has_cached_gaussian_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = ~0ull - (~0ull % bound);
  std::uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return draw % bound;
}

bool RngStream::next_bernoulli(double p) { return next_uniform() < p; }

}  // namespace featdp
