#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "featdp/rng.hpp"

namespace featdp {

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;

  /// delta defaults to n^-1.1 when unset.
  static double default_delta(std::size_t n);
};

/// Mechanism parameters of one training run: clip norm C, noise multiplier
/// sigma, Poisson rate p, and step count T. The per-release noise is
/// N(0, (sigma*C)^2 I) on the clipped sum, so C is also the sensitivity
/// bound tau.
struct NoiseParams {
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;
  double sample_rate = 1.0;
  std::int64_t steps = 1;

  void validate(std::size_t dataset_rows) const;
};

double l2_norm(std::span<const double> v);

/// Rescale to norm <= clip_norm; vectors already inside the ball are
/// untouched (scale factor exactly 1).
void clip_in_place(std::span<double> g, double clip_norm);

/// (sum of clipped gradients + N(0, (sigma*clip_norm)^2 I)) / divisor.
/// The noise is released with the same shape and scale on every call, so
/// the mechanism is identical across realized batch sizes.
std::vector<double> noisy_private_mean(const std::vector<std::vector<double>>& clipped,
                                       std::size_t dim, double clip_norm,
                                       double sigma, std::size_t divisor,
                                       RngStream& stream);

/// Independent inclusion of each index with probability p; returned sorted.
std::vector<std::size_t> poisson_sample(std::size_t n, double p, RngStream& stream);

/// Uniform sample of `count` distinct indices; returned sorted.
std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t count,
                                        RngStream& stream);

/// Closed-form calibration sigma = c*tau*m/(eps*n) *
/// sqrt(T * ln(1/delta) * ln(T/delta)); the absolute constant c defaults
/// to 1 and is exposed in configuration.
double calibrate_sigma_closed_form(double eps, double delta, double tau, double m,
                                   double n, std::int64_t steps, double c = 1.0);

/// Renyi accountant for the Poisson-subsampled Gaussian mechanism.
/// Per-step divergences are computed once over an integer order grid; a
/// composed (eps, delta) bound is the minimum over orders of
/// T * rdp(order) + log(1/delta)/(order - 1).
class RdpAccountant {
 public:
  RdpAccountant(double sigma, double sample_rate);
  double epsilon(double delta, std::int64_t steps) const;
  static const std::vector<std::int64_t>& default_orders();

 private:
  std::vector<std::int64_t> orders_;
  std::vector<double> per_step_rdp_;
};

double rdp_epsilon(double sigma, double sample_rate, std::int64_t steps, double delta);

/// Smallest sigma (1e-3 relative tolerance) whose accountant epsilon is at
/// most `eps`. Throws if the budget is unreachable below sigma = 1e6.
double calibrate_sigma_accountant(double eps, double delta, double sample_rate,
                                  std::int64_t steps);

}  // namespace featdp
