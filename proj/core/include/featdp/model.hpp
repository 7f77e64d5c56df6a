#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "featdp/rng.hpp"

namespace featdp {

/// Four affine layers; the first three blocks are affine -> GELU ->
/// feature-axis normalization (learned scale/shift) -> dropout, the last is
/// a single-logit affine head.
struct MlpConfig {
  std::size_t input_width = 0;
  std::vector<std::size_t> hidden = {64, 32, 16};  // exactly three blocks
  double dropout = 0.15;
  double layer_norm_eps = 1e-5;

  void validate() const;
};

/// Dropout keep/scale factors per block entry: 0 for dropped units,
/// 1/(1-p) for kept ones; all 1 in eval mode.
struct DropoutMasks {
  std::vector<std::vector<double>> factors;

  static DropoutMasks eval(const MlpConfig& cfg);
  static DropoutMasks draw(const MlpConfig& cfg, RngStream& stream);
};

struct BlockTrace {
  std::vector<double> input;
  std::vector<double> preact;    // affine output
  std::vector<double> gelu_out;
  std::vector<double> xhat;      // normalized activations
  double inv_std = 0.0;
  std::vector<double> output;    // after scale/shift and dropout
};

/// Everything needed to replay one forward pass exactly and to run exact
/// reverse-mode differentiation through it.
struct ForwardTrace {
  std::vector<BlockTrace> blocks;
  std::vector<double> hidden;  // block-3 output, the input to the final layer
  double logit = 0.0;
  DropoutMasks masks;
};

class MlpModel {
 public:
  explicit MlpModel(MlpConfig cfg);

  const MlpConfig& config() const { return cfg_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  struct ParamSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  /// Flattening order: per block, weight (row-major out x in), bias, scale,
  /// shift; then the head weight and bias.
  const std::vector<ParamSlice>& param_layout() const { return layout_; }

  /// Scaled-uniform fan-in initialization, deterministic in the seed.
  void init_params(std::uint64_t run_seed);

  ForwardTrace forward(std::span<const double> x, const DropoutMasks& masks) const;
  ForwardTrace forward_eval(std::span<const double> x) const;
  double logit_eval(std::span<const double> x) const;

  /// Accumulates into `grad` the gradient of (dlogit * logit +
  /// dhidden . hidden) for the recorded pass. `dhidden` may be empty.
  void backward(const ForwardTrace& trace, double dlogit,
                std::span<const double> dhidden, std::span<double> grad) const;

 private:
  MlpConfig cfg_;
  std::vector<std::size_t> widths_;  // input, h1, h2, h3
  std::vector<double> params_;
  std::vector<ParamSlice> layout_;
  // offsets per block: weight, bias, scale, shift; then head weight/bias
  std::vector<std::size_t> w_off_, b_off_, g_off_, s_off_;
  std::size_t head_w_off_ = 0, head_b_off_ = 0;
};

// --- losses --------------------------------------------------------------

/// Numerically stable binary cross-entropy on the logit:
/// max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_logit_loss(double logit, int label);
/// d(bce)/d(logit) = sigmoid(logit) - label.
double bce_logit_grad(double logit, int label);

enum class PrivateLossVariant { kNaive, kCalibrated, kFusionDp };

struct PrivateLossValue {
  double loss = 0.0;
  double loss_original = 0.0;
  double loss_hybrid = 0.0;
  double consistency = 0.0;
};

/// naive:       l(f(x), y)
/// calibrated:  l(f(x), y) - l(f(x~), y)
/// fusiondp:    calibrated + beta * |h(x) - h(x~)|^2
/// The same dropout masks are applied to the x and x~ passes.
PrivateLossValue private_loss(const MlpModel& model, PrivateLossVariant variant,
                              double beta, std::span<const double> x,
                              std::span<const double> x_tilde, int label,
                              const DropoutMasks& masks);

/// Exact per-sample gradient of l(f(x), y); `grad` is overwritten.
void per_sample_grad_clean(const MlpModel& model, std::span<const double> x,
                           int label, const DropoutMasks& masks,
                           std::span<double> grad, double* loss_out = nullptr);

/// Exact per-sample gradient of the chosen private-loss variant; both
/// forward passes share `masks` and their parameter gradients sum.
void per_sample_grad_private(const MlpModel& model, PrivateLossVariant variant,
                             double beta, std::span<const double> x,
                             std::span<const double> x_tilde, int label,
                             const DropoutMasks& masks, std::span<double> grad,
                             double* loss_out = nullptr);

// --- checkpoints ----------------------------------------------------------

/// Text checkpoint with hexfloat parameters; round-trips exactly.
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace featdp
