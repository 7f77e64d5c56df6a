#include "featdp/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "featdp/error.hpp"

namespace featdp {

double PrivacyBudget::default_delta(std::size_t n) {
  return std::pow(static_cast<double>(n), -1.1);
}

void NoiseParams::validate(std::size_t dataset_rows) const {
  if (clip_norm <= 0.0) throw user_error("noise params: clip norm must be > 0");
  if (noise_multiplier < 0.0)
    throw user_error("noise params: noise multiplier must be >= 0");
  if (sample_rate <= 0.0 || sample_rate > 1.0)
    throw user_error("noise params: sample rate must be in (0, 1]");
  if (steps < 1) throw user_error("noise params: steps must be >= 1");
  if (sample_rate * static_cast<double>(dataset_rows) < 1.0)
    throw user_error("noise params: expected private batch is below one sample");
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void clip_in_place(std::span<double> g, double clip_norm) {
  if (clip_norm <= 0.0) throw user_error("clip: clip norm must be > 0");
  double norm = l2_norm(g);
  double scale = 1.0 / std::max(1.0, norm / clip_norm);
  if (scale != 1.0)
    for (double& x : g) x *= scale;
}

std::vector<double> noisy_private_mean(const std::vector<std::vector<double>>& clipped,
                                       std::size_t dim, double clip_norm,
                                       double sigma, std::size_t divisor,
                                       RngStream& stream) {
  if (divisor < 1) throw user_error("noisy mean: divisor must be >= 1");
  std::vector<double> sum(dim, 0.0);
  for (const std::vector<double>& g : clipped) {
    if (g.size() != dim) throw internal_error("noisy mean: gradient dim mismatch");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += g[i];
  }
  const double noise_std = sigma * clip_norm;
  const double inv = 1.0 / static_cast<double>(divisor);
  for (std::size_t i = 0; i < dim; ++i)
    sum[i] = (sum[i] + noise_std * stream.next_gaussian()) * inv;
  return sum;
}

std::vector<std::size_t> poisson_sample(std::size_t n, double p, RngStream& stream) {
  if (p < 0.0 || p > 1.0) throw user_error("poisson: p must be in [0, 1]");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < n; ++i)
    if (stream.next_bernoulli(p)) picked.push_back(i);
  return picked;
}

std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t count,
                                        RngStream& stream) {
  if (count > n) throw user_error("uniform sample: count exceeds population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t pick = i + stream.next_below(n - i);
    std::swap(pool[i], pool[pick]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

double calibrate_sigma_closed_form(double eps, double delta, double tau, double m,
                                   double n, std::int64_t steps, double c) {
  if (eps <= 0.0 || delta <= 0.0 || delta >= 1.0 || tau <= 0.0 || m <= 0.0 ||
      n <= 0.0 || steps < 1 || c <= 0.0)
    throw user_error("closed-form sigma: all arguments must be positive");
  double t = static_cast<double>(steps);
  return c * tau * m / (eps * n) *
         std::sqrt(t * std::log(1.0 / delta) * std::log(t / delta));
}

namespace {

double log_binomial(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n + 1)) -
         std::lgamma(static_cast<double>(k + 1)) -
         std::lgamma(static_cast<double>(n - k + 1));
}

double log_sum_exp(const std::vector<double>& terms) {
  double max_term = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(max_term)) return max_term;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

// Renyi divergence per step of the Poisson-subsampled Gaussian at integer
// order alpha, via the binomial expansion of the sampled mixture (computed
// entirely in log space so large alpha / small sigma do not overflow).
double subsampled_gaussian_rdp(std::int64_t alpha, double sigma, double p) {
  if (p == 0.0) return 0.0;
  const double base = 1.0 / (2.0 * sigma * sigma);
  if (p == 1.0) return static_cast<double>(alpha) * base;
  const double log_p = std::log(p);
  const double log_1mp = std::log1p(-p);
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  for (std::int64_t k = 0; k <= alpha; ++k) {
    double term = log_binomial(alpha, k) + static_cast<double>(alpha - k) * log_1mp +
                  static_cast<double>(k) * log_p +
                  static_cast<double>(k) * static_cast<double>(k - 1) * base;
    terms.push_back(term);
  }
  return log_sum_exp(terms) / static_cast<double>(alpha - 1);
}

}  // namespace

const std::vector<std::int64_t>& RdpAccountant::default_orders() {
  static const std::vector<std::int64_t> orders = [] {
    std::vector<std::int64_t> o;
    for (std::int64_t a = 2; a <= 64; ++a) o.push_back(a);
    for (std::int64_t a = 66; a <= 128; a += 2) o.push_back(a);
    for (std::int64_t a = 132; a <= 256; a += 4) o.push_back(a);
    for (std::int64_t a = 264; a <= 512; a += 8) o.push_back(a);
    for (std::int64_t a = 528; a <= 1024; a += 16) o.push_back(a);
    for (std::int64_t a = 1056; a <= 2048; a += 32) o.push_back(a);
    return o;
  }();
  return orders;
}

RdpAccountant::RdpAccountant(double sigma, double sample_rate) {
  if (sigma <= 0.0) throw user_error("accountant: sigma must be > 0");
  if (sample_rate <= 0.0 || sample_rate > 1.0)
    throw user_error("accountant: sample rate must be in (0, 1]");
  orders_ = default_orders();
  per_step_rdp_.reserve(orders_.size());
  for (std::int64_t alpha : orders_)
    per_step_rdp_.push_back(subsampled_gaussian_rdp(alpha, sigma, sample_rate));
}

double RdpAccountant::epsilon(double delta, std::int64_t steps) const {
  if (delta <= 0.0 || delta >= 1.0)
    throw user_error("accountant: delta must be in (0, 1)");
  if (steps < 0) throw user_error("accountant: steps must be >= 0");
  if (steps == 0) return 0.0;
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    double eps = static_cast<double>(steps) * per_step_rdp_[i] +
                 log_inv_delta / static_cast<double>(orders_[i] - 1);
    best = std::min(best, eps);
  }
  return best;
}

double rdp_epsilon(double sigma, double sample_rate, std::int64_t steps, double delta) {
  return RdpAccountant(sigma, sample_rate).epsilon(delta, steps);
}

double calibrate_sigma_accountant(double eps, double delta, double sample_rate,
                                  std::int64_t steps) {
  if (eps <= 0.0) throw user_error("calibrate: epsilon must be > 0");
  constexpr double kSigmaCap = 1e6;

  auto eps_at = [&](double sigma) {
    return RdpAccountant(sigma, sample_rate).epsilon(delta, steps);
  };

  double hi = 1.0;
  while (eps_at(hi) > eps) {
    hi *= 2.0;
    if (hi > kSigmaCap)
      throw user_error("calibrate: budget eps=" + std::to_string(eps) +
                       " unreachable below sigma=1e6");
  }
  double lo = hi / 2.0;
  while (lo > 1e-6 && eps_at(lo) <= eps) {
    hi = lo;
    lo /= 2.0;
  }
  // Bisect to 1e-3 relative width; return the upper end so the bound holds.
  while ((hi - lo) / hi > 1e-3) {
    double mid = 0.5 * (lo + hi);
    (eps_at(mid) <= eps ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace featdp
