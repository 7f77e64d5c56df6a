#include "featdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "featdp/error.hpp"

namespace featdp {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

double gelu(double a) { return 0.5 * a * (1.0 + std::erf(a * kInvSqrt2)); }

double gelu_grad(double a) {
  double cdf = 0.5 * (1.0 + std::erf(a * kInvSqrt2));
  double pdf = std::exp(-0.5 * a * a) * kInvSqrt2Pi;
  return cdf + a * pdf;
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void MlpConfig::validate() const {
  if (input_width == 0) throw user_error("model: input width must be positive");
  if (hidden.size() != 3)
    throw user_error("model: exactly three hidden widths (four affine layers)");
  for (std::size_t h : hidden)
    if (h == 0) throw user_error("model: hidden widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw user_error("model: dropout must be in [0, 1)");
}

DropoutMasks DropoutMasks::eval(const MlpConfig& cfg) {
  DropoutMasks m;
  m.factors.resize(3);
  for (std::size_t i = 0; i < 3; ++i) m.factors[i].assign(cfg.hidden[i], 1.0);
  return m;
}

DropoutMasks DropoutMasks::draw(const MlpConfig& cfg, RngStream& stream) {
  DropoutMasks m;
  m.factors.resize(3);
  const double keep = 1.0 - cfg.dropout;
  const double scale = 1.0 / keep;
  for (std::size_t i = 0; i < 3; ++i) {
    m.factors[i].resize(cfg.hidden[i]);
    for (double& f : m.factors[i]) f = stream.next_bernoulli(keep) ? scale : 0.0;
  }
  return m;
}

MlpModel::MlpModel(MlpConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  widths_ = {cfg_.input_width, cfg_.hidden[0], cfg_.hidden[1], cfg_.hidden[2]};

  std::size_t offset = 0;
  auto add = [&](const std::string& name, std::size_t size) {
    layout_.push_back({name, offset, size});
    offset += size;
    return offset - size;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    std::string tag = std::to_string(i + 1);
    w_off_.push_back(add("w" + tag, widths_[i + 1] * widths_[i]));
    b_off_.push_back(add("b" + tag, widths_[i + 1]));
    g_off_.push_back(add("scale" + tag, widths_[i + 1]));
    s_off_.push_back(add("shift" + tag, widths_[i + 1]));
  }
  head_w_off_ = add("w4", widths_[3]);
  head_b_off_ = add("b4", 1);
  params_.assign(offset, 0.0);
}

void MlpModel::init_params(std::uint64_t run_seed) {
  RngStream stream(run_seed, StreamPurpose::kParamInit);
  std::fill(params_.begin(), params_.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    double bound = 1.0 / std::sqrt(static_cast<double>(widths_[i]));
    for (std::size_t k = 0; k < widths_[i + 1] * widths_[i]; ++k)
      params_[w_off_[i] + k] = (2.0 * stream.next_uniform() - 1.0) * bound;
    for (std::size_t k = 0; k < widths_[i + 1]; ++k) params_[g_off_[i] + k] = 1.0;
  }
  double bound = 1.0 / std::sqrt(static_cast<double>(widths_[3]));
  for (std::size_t k = 0; k < widths_[3]; ++k)
    params_[head_w_off_ + k] = (2.0 * stream.next_uniform() - 1.0) * bound;
}

ForwardTrace MlpModel::forward(std::span<const double> x,
                               const DropoutMasks& masks) const {
  if (x.size() != cfg_.input_width)
    throw user_error("model: input has " + std::to_string(x.size()) +
                     " entries, expected " + std::to_string(cfg_.input_width));
  ForwardTrace trace;
  trace.blocks.resize(3);
  trace.masks = masks;

  std::vector<double> current(x.begin(), x.end());
  for (std::size_t i = 0; i < 3; ++i) {
    BlockTrace& bt = trace.blocks[i];
    const std::size_t in_w = widths_[i];
    const std::size_t out_w = widths_[i + 1];
    bt.input = current;

    bt.preact.resize(out_w);
    const double* w = params_.data() + w_off_[i];
    const double* b = params_.data() + b_off_[i];
    for (std::size_t r = 0; r < out_w; ++r) {
      double acc = b[r];
      const double* wrow = w + r * in_w;
      for (std::size_t c = 0; c < in_w; ++c) acc += wrow[c] * bt.input[c];
      bt.preact[r] = acc;
    }

    bt.gelu_out.resize(out_w);
    for (std::size_t r = 0; r < out_w; ++r) bt.gelu_out[r] = gelu(bt.preact[r]);

    // Normalize over the feature axis with learned scale/shift.
    double mean = 0.0;
    for (double v : bt.gelu_out) mean += v;
    mean /= static_cast<double>(out_w);
    double var = 0.0;
    for (double v : bt.gelu_out) {
      double c = v - mean;
      var += c * c;
    }
    var /= static_cast<double>(out_w);
    bt.inv_std = 1.0 / std::sqrt(var + cfg_.layer_norm_eps);
    bt.xhat.resize(out_w);
    bt.output.resize(out_w);
    const double* scale = params_.data() + g_off_[i];
    const double* shift = params_.data() + s_off_[i];
    const std::vector<double>& mask = masks.factors[i];
    for (std::size_t r = 0; r < out_w; ++r) {
      bt.xhat[r] = (bt.gelu_out[r] - mean) * bt.inv_std;
      bt.output[r] = (scale[r] * bt.xhat[r] + shift[r]) * mask[r];
    }
    current = bt.output;
  }

  trace.hidden = current;
  double logit = params_[head_b_off_];
  const double* hw = params_.data() + head_w_off_;
  for (std::size_t c = 0; c < widths_[3]; ++c) logit += hw[c] * current[c];
  trace.logit = logit;
  if (!std::isfinite(logit))
    throw internal_error("model: non-finite logit in forward pass");
  return trace;
}

ForwardTrace MlpModel::forward_eval(std::span<const double> x) const {
  return forward(x, DropoutMasks::eval(cfg_));
}

double MlpModel::logit_eval(std::span<const double> x) const {
  return forward_eval(x).logit;
}

void MlpModel::backward(const ForwardTrace& trace, double dlogit,
                        std::span<const double> dhidden,
                        std::span<double> grad) const {
  if (grad.size() != params_.size())
    throw internal_error("model: gradient buffer size mismatch");

  // Head layer.
  const std::size_t h3 = widths_[3];
  std::vector<double> dout(h3);
  const double* hw = params_.data() + head_w_off_;
  for (std::size_t c = 0; c < h3; ++c) {
    grad[head_w_off_ + c] += dlogit * trace.hidden[c];
    dout[c] = dlogit * hw[c];
  }
  grad[head_b_off_] += dlogit;
  if (!dhidden.empty()) {
    if (dhidden.size() != h3) throw internal_error("model: dhidden size mismatch");
    for (std::size_t c = 0; c < h3; ++c) dout[c] += dhidden[c];
  }

  for (std::size_t i = 3; i-- > 0;) {
    const BlockTrace& bt = trace.blocks[i];
    const std::size_t in_w = widths_[i];
    const std::size_t out_w = widths_[i + 1];
    const double* scale = params_.data() + g_off_[i];
    const std::vector<double>& mask = trace.masks.factors[i];

    // Dropout, then scale/shift.
    std::vector<double> dln(out_w), dxhat(out_w);
    for (std::size_t r = 0; r < out_w; ++r) {
      dln[r] = dout[r] * mask[r];
      grad[g_off_[i] + r] += dln[r] * bt.xhat[r];
      grad[s_off_[i] + r] += dln[r];
      dxhat[r] = dln[r] * scale[r];
    }

    // Normalization backward:
    // dg = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t r = 0; r < out_w; ++r) {
      mean_dxhat += dxhat[r];
      mean_dxhat_xhat += dxhat[r] * bt.xhat[r];
    }
    mean_dxhat /= static_cast<double>(out_w);
    mean_dxhat_xhat /= static_cast<double>(out_w);

    std::vector<double> dpre(out_w);
    for (std::size_t r = 0; r < out_w; ++r) {
      double dg = bt.inv_std * (dxhat[r] - mean_dxhat - bt.xhat[r] * mean_dxhat_xhat);
      dpre[r] = dg * gelu_grad(bt.preact[r]);
    }

    // Affine backward.
    const double* w = params_.data() + w_off_[i];
    std::vector<double> din(in_w, 0.0);
    for (std::size_t r = 0; r < out_w; ++r) {
      const double dp = dpre[r];
      grad[b_off_[i] + r] += dp;
      double* gw = grad.data() + w_off_[i] + r * in_w;
      const double* wrow = w + r * in_w;
      for (std::size_t c = 0; c < in_w; ++c) {
        gw[c] += dp * bt.input[c];
        din[c] += dp * wrow[c];
      }
    }
    dout = std::move(din);
  }
}

// --- losses --------------------------------------------------------------

double bce_logit_loss(double logit, int label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::fabs(logit)));
}

double bce_logit_grad(double logit, int label) {
  return stable_sigmoid(logit) - static_cast<double>(label);
}

PrivateLossValue private_loss(const MlpModel& model, PrivateLossVariant variant,
                              double beta, std::span<const double> x,
                              std::span<const double> x_tilde, int label,
                              const DropoutMasks& masks) {
  PrivateLossValue v;
  ForwardTrace tx = model.forward(x, masks);
  v.loss_original = bce_logit_loss(tx.logit, label);
  if (variant == PrivateLossVariant::kNaive) {
    v.loss = v.loss_original;
    return v;
  }
  if (x_tilde.empty())
    throw user_error("private loss: this variant needs the hybrid input");
  ForwardTrace th = model.forward(x_tilde, masks);
  v.loss_hybrid = bce_logit_loss(th.logit, label);
  v.loss = v.loss_original - v.loss_hybrid;
  if (variant == PrivateLossVariant::kFusionDp) {
    double acc = 0.0;
    for (std::size_t c = 0; c < tx.hidden.size(); ++c) {
      double diff = tx.hidden[c] - th.hidden[c];
      acc += diff * diff;
    }
    v.consistency = acc;
    v.loss += beta * acc;
  }
  return v;
}

void per_sample_grad_clean(const MlpModel& model, std::span<const double> x,
                           int label, const DropoutMasks& masks,
                           std::span<double> grad, double* loss_out) {
  std::fill(grad.begin(), grad.end(), 0.0);
  ForwardTrace trace = model.forward(x, masks);
  model.backward(trace, bce_logit_grad(trace.logit, label), {}, grad);
  if (loss_out) *loss_out = bce_logit_loss(trace.logit, label);
}

void per_sample_grad_private(const MlpModel& model, PrivateLossVariant variant,
                             double beta, std::span<const double> x,
                             std::span<const double> x_tilde, int label,
                             const DropoutMasks& masks, std::span<double> grad,
                             double* loss_out) {
  std::fill(grad.begin(), grad.end(), 0.0);
  ForwardTrace tx = model.forward(x, masks);
  double loss = bce_logit_loss(tx.logit, label);

  if (variant == PrivateLossVariant::kNaive) {
    model.backward(tx, bce_logit_grad(tx.logit, label), {}, grad);
    if (loss_out) *loss_out = loss;
    return;
  }
  if (x_tilde.empty())
    throw user_error("private loss: this variant needs the hybrid input");
  ForwardTrace th = model.forward(x_tilde, masks);
  loss -= bce_logit_loss(th.logit, label);

  std::vector<double> dh;
  if (variant == PrivateLossVariant::kFusionDp) {
    const std::size_t hw = tx.hidden.size();
    dh.resize(hw);
    double acc = 0.0;
    for (std::size_t c = 0; c < hw; ++c) {
      double diff = tx.hidden[c] - th.hidden[c];
      dh[c] = 2.0 * beta * diff;
      acc += diff * diff;
    }
    loss += beta * acc;
  }

  model.backward(tx, bce_logit_grad(tx.logit, label), dh, grad);
  // Hybrid pass enters with negative loss weight; the consistency seed flips
  // sign as well.
  for (double& v : dh) v = -v;
  model.backward(th, -bce_logit_grad(th.logit, label), dh, grad);
  if (loss_out) *loss_out = loss;
}

// --- checkpoints ----------------------------------------------------------

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("model: cannot write " + path.string());
  const MlpConfig& cfg = model.config();
  out << "featdp-mlp 1\n";
  out << "input " << cfg.input_width << "\n";
  out << "hidden " << cfg.hidden[0] << ' ' << cfg.hidden[1] << ' ' << cfg.hidden[2] << "\n";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", cfg.dropout);
  out << "dropout " << buf << "\n";
  out << "params " << model.param_count() << "\n";
  std::span<const double> p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", p[i]);
    out << buf << ((i % 4 == 3) ? '\n' : ' ');
  }
  if (p.size() % 4 != 0) out << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("model: cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "featdp-mlp" || version != 1)
    throw user_error("model: unrecognized checkpoint format in " + path.string());
  MlpConfig cfg;
  std::string keyword;
  in >> keyword >> cfg.input_width;
  if (keyword != "input") throw user_error("model: malformed checkpoint");
  cfg.hidden.assign(3, 0);
  in >> keyword >> cfg.hidden[0] >> cfg.hidden[1] >> cfg.hidden[2];
  if (keyword != "hidden") throw user_error("model: malformed checkpoint");
  std::string dropout_token;
  in >> keyword >> dropout_token;
  if (keyword != "dropout") throw user_error("model: malformed checkpoint");
  cfg.dropout = std::strtod(dropout_token.c_str(), nullptr);
  std::size_t count = 0;
  in >> keyword >> count;
  if (keyword != "params") throw user_error("model: malformed checkpoint");

  MlpModel model(cfg);
  if (count != model.param_count())
    throw user_error("model: checkpoint has " + std::to_string(count) +
                     " params, architecture needs " +
                     std::to_string(model.param_count()));
  std::span<double> p = model.params();
  for (std::size_t i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token)) throw user_error("model: truncated checkpoint");
    p[i] = std::strtod(token.c_str(), nullptr);
  }
  return model;
}

}  // namespace featdp
