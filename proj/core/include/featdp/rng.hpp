#pragma once

#include <cstdint>

namespace featdp {

/// Purpose tag naming an independent random stream. Every source of
/// randomness in a run is a stream keyed by (seed, purpose, step, lane),
/// so draws from one stream never perturb another and whole runs are
/// bit-reproducible from the run seed alone.
enum class StreamPurpose : std::uint64_t {
  kParamInit = 1,
  kPrivateSample = 2,   // Poisson sampling of the private batch
  kPublicSample = 3,    // uniform sampling of the public batch
  kGaussianNoise = 4,   // privacy noise release
  kDropoutPublic = 5,   // dropout masks, public-branch samples
  kDropoutPrivate = 6,  // dropout masks, private-branch samples (shared x / x~)
  kMask = 7,            // Gaussian feature masking
  kSynthesis = 8,       // synthetic data generation
  kSplitShuffle = 9,
  kDownsample = 10,
  kLabelDraw = 11,
  kGeneric = 12,
};

/// Counter-based generator: output i of a stream is a fixed 64-bit hash of
/// (key, i), where the key is derived from (seed, purpose, step, lane).
/// A stream is therefore a pure function of its name and read position.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t step = 0,
            std::uint64_t lane = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_uniform();
  /// Standard normal (Box-Muller; the paired draw is cached).
  double next_gaussian();
  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);
  bool next_bernoulli(double p);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace featdp
