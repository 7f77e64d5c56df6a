#include "featdp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "featdp/error.hpp"

namespace featdp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kDefaultExpectedPrivateBatch = 256;

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kSgdOrg: return "sgd_org";
    case Method::kSgdHybrid: return "sgd_hybrid";
    case Method::kSgdPub: return "sgd_pub";
    case Method::kDpSgd: return "dpsgd";
    case Method::kNaiveFusion: return "naive_fusion";
    case Method::kNaiveFusionPub: return "naive_fusion_pub";
    case Method::kFeatureDp: return "feature_dp";
    case Method::kCalibratedFusion: return "calibrated_fusion";
    case Method::kFusionDp: return "fusiondp";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::kSgdOrg,      Method::kSgdHybrid,       Method::kSgdPub,
      Method::kDpSgd,       Method::kNaiveFusion,     Method::kNaiveFusionPub,
      Method::kFeatureDp,   Method::kCalibratedFusion, Method::kFusionDp};
  return methods;
}

Method method_from_name(const std::string& name) {
  for (Method m : all_methods())
    if (method_name(m) == name) return m;
  throw user_error("unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw user_error("config: epochs must be >= 0");
  if (lr < 0.0) throw user_error("config: lr must be >= 0");
  if (lr_decay_factor <= 0.0) throw user_error("config: lr_decay_factor must be > 0");
  if (lr_decay_every < 0) throw user_error("config: lr_decay_every must be >= 0");
  if (alpha < 0.0) throw user_error("config: alpha must be >= 0");
  if (beta < 0.0) throw user_error("config: beta must be >= 0");
  if (beta > 0.0 && method != Method::kFusionDp)
    throw user_error("config: beta > 0 is only valid for fusiondp");
  if (lambda < 0.0 || lambda > 1.0)
    throw user_error("config: lambda must be in [0, 1]");
  if (has_private_branch()) {
    if (clip_norm <= 0.0) throw user_error("config: clip norm must be > 0");
    if (sigma < 0.0 && epsilon <= 0.0)
      throw user_error("config: DP methods need either sigma or a target epsilon");
  }
  if (sample_rate > 1.0) throw user_error("config: sample_rate must be <= 1");
  MlpConfig probe{1, hidden, 0.15, 1e-5};
  probe.validate();
}

bool TrainConfig::has_private_branch() const {
  switch (method) {
    case Method::kSgdOrg:
    case Method::kSgdHybrid:
    case Method::kSgdPub:
      return false;
    default:
      return true;
  }
}

bool TrainConfig::uses_hybrid() const {
  switch (method) {
    case Method::kSgdHybrid:
    case Method::kNaiveFusion:
    case Method::kCalibratedFusion:
    case Method::kFusionDp:
      return true;
    default:
      return false;
  }
}

bool TrainConfig::uses_masked() const {
  switch (method) {
    case Method::kSgdPub:
    case Method::kNaiveFusionPub:
    case Method::kFeatureDp:
      return true;
    default:
      return false;
  }
}

Trainer::EncodedData Trainer::encode_dataset(const Dataset& ds) {
  EncodedData enc;
  enc.rows = ds.rows();
  enc.width = ds.schema().encoded_width();
  enc.cells.assign(enc.rows * enc.width, 0.0);
  std::vector<double> raw(ds.cols());
  for (std::size_t i = 0; i < enc.rows; ++i) {
    ds.copy_row(i, raw);
    encode_row(ds.schema(), raw, {enc.cells.data() + i * enc.width, enc.width});
  }
  return enc;
}

Trainer::Trainer(const SplitSet& splits, const HybridSet* hybrid, TrainConfig config)
    : splits_(splits), hybrid_(hybrid), cfg_(std::move(config)),
      model_(MlpConfig{splits.train.schema().encoded_width(), cfg_.hidden,
                       0.15, 1e-5}) {
  cfg_.validate();
  if (cfg_.uses_hybrid() && hybrid_ == nullptr)
    throw user_error("train: method " + method_name(cfg_.method) +
                     " needs hybrid data");

  const std::size_t n_train = splits_.train.rows();
  if (n_train == 0) throw user_error("train: empty training split");

  // Structural privacy hygiene: these methods must never read original
  // private columns of the train/val rows; the audit makes that checkable
  // and run() enforces it.
  if (cfg_.method == Method::kSgdHybrid || cfg_.method == Method::kSgdPub) {
    splits_.train.enable_audit();
    splits_.val.enable_audit();
  }

  // Branch wiring per method.
  const Dataset* public_data = nullptr;
  const Dataset* private_ref = nullptr;
  bool eval_on_hybrid = false, eval_on_masked = false;
  switch (cfg_.method) {
    case Method::kSgdOrg:
      has_public_ = true;
      public_data = &splits_.train;
      break;
    case Method::kSgdHybrid:
      has_public_ = true;
      public_data = &hybrid_->train.data();
      eval_on_hybrid = true;
      break;
    case Method::kSgdPub:
      has_public_ = true;
      eval_on_masked = true;
      break;
    case Method::kDpSgd:
      has_private_ = true;
      variant_ = PrivateLossVariant::kNaive;
      private_weight_ = 1.0;  // alpha fixed to 1, public branch off
      break;
    case Method::kNaiveFusion:
      has_public_ = true;
      has_private_ = true;
      variant_ = PrivateLossVariant::kNaive;
      public_data = &hybrid_->train.data();
      public_weight_ = 1.0 - cfg_.lambda;
      private_weight_ = cfg_.lambda;
      break;
    case Method::kNaiveFusionPub:
      has_public_ = true;
      has_private_ = true;
      variant_ = PrivateLossVariant::kNaive;
      public_weight_ = 1.0 - cfg_.lambda;
      private_weight_ = cfg_.lambda;
      break;
    case Method::kFeatureDp:
      has_public_ = true;
      has_private_ = true;
      variant_ = PrivateLossVariant::kCalibrated;
      private_uses_reference_ = true;
      public_weight_ = 1.0;
      private_weight_ = cfg_.alpha;
      break;
    case Method::kCalibratedFusion:
      has_public_ = true;
      has_private_ = true;
      variant_ = PrivateLossVariant::kCalibrated;
      private_uses_reference_ = true;
      public_data = &hybrid_->train.data();
      private_ref = &hybrid_->train.data();
      public_weight_ = 1.0;
      private_weight_ = cfg_.alpha;
      break;
    case Method::kFusionDp:
      has_public_ = true;
      has_private_ = true;
      variant_ = PrivateLossVariant::kFusionDp;
      private_uses_reference_ = true;
      public_data = &hybrid_->train.data();
      private_ref = &hybrid_->train.data();
      public_weight_ = 1.0;
      private_weight_ = cfg_.alpha;
      break;
  }

  // Masked data for the masked-feature baselines, drawn per split from the
  // run seed.
  if (cfg_.uses_masked()) {
    RngStream train_seed(cfg_.run_seed, StreamPurpose::kMask, 0);
    masked_train_ = mask_gaussian(splits_.train, train_seed.next_u64());
    public_data = &masked_train_->data();
    if (cfg_.method == Method::kFeatureDp) private_ref = &masked_train_->data();
    if (cfg_.method == Method::kSgdPub) {
      RngStream val_seed(cfg_.run_seed, StreamPurpose::kMask, 1);
      RngStream test_seed(cfg_.run_seed, StreamPurpose::kMask, 2);
      masked_val_ = mask_gaussian(splits_.val, val_seed.next_u64());
      masked_test_ = mask_gaussian(splits_.test, test_seed.next_u64());
    }
  }

  // Mechanism parameters.
  sample_rate_ = cfg_.sample_rate > 0.0
                     ? cfg_.sample_rate
                     : std::min(1.0, static_cast<double>(kDefaultExpectedPrivateBatch) /
                                         static_cast<double>(n_train));
  if (has_private_ && sample_rate_ * static_cast<double>(n_train) < 1.0)
    throw user_error("train: expected private batch p*n is below one sample");
  const double expected_private =
      std::max(1.0, sample_rate_ * static_cast<double>(n_train));
  std::size_t default_public =
      static_cast<std::size_t>(std::llround(4.0 * expected_private));
  public_batch_ = cfg_.public_batch > 0 ? static_cast<std::size_t>(cfg_.public_batch)
                                        : default_public;
  public_batch_ = std::min(public_batch_, n_train);
  if (has_public_ && public_batch_ == 0)
    throw user_error("train: public batch resolved to zero");

  // One epoch is ceil(1/p) steps for every method, so "epochs" buys the
  // same number of updates whether or not a Poisson branch is active and
  // expected private-sample coverage matches one pass.
  steps_per_epoch_ = static_cast<int>(std::ceil(1.0 / sample_rate_));
  total_steps_ = static_cast<std::int64_t>(cfg_.epochs) * steps_per_epoch_;

  delta_ = cfg_.delta > 0.0 ? cfg_.delta : PrivacyBudget::default_delta(n_train);
  if (has_private_) {
    if (cfg_.sigma >= 0.0) {
      sigma_ = cfg_.sigma;
    } else {
      if (total_steps_ == 0)
        sigma_ = 0.0;
      else
        sigma_ = calibrate_sigma_accountant(cfg_.epsilon, delta_, sample_rate_,
                                            total_steps_);
    }
    if (sigma_ > 0.0) accountant_.emplace(sigma_, sample_rate_);
  }

  // Encode only the sources this method actually reads.
  if (has_public_) enc_public_ = encode_dataset(*public_data);
  if (has_private_) {
    enc_priv_orig_ = encode_dataset(splits_.train);
    if (private_uses_reference_) enc_priv_ref_ = encode_dataset(*private_ref);
  }
  if (eval_on_hybrid && (!hybrid_->val || !hybrid_->test))
    throw user_error("train: sgd_hybrid needs hybrid val and test splits");
  const Dataset& val_src = eval_on_hybrid ? hybrid_->val->data()
                         : eval_on_masked ? masked_val_->data()
                                          : splits_.val;
  const Dataset& test_src = eval_on_hybrid ? hybrid_->test->data()
                          : eval_on_masked ? masked_test_->data()
                                           : splits_.test;
  enc_val_ = encode_dataset(val_src);
  enc_test_ = encode_dataset(test_src);

  model_.init_params(cfg_.run_seed);
}

double Trainer::lr_at(std::int64_t t) const {
  if (cfg_.lr_decay_every <= 0 || cfg_.lr_decay_factor == 1.0) return cfg_.lr;
  int epoch = static_cast<int>(t / steps_per_epoch_);
  return cfg_.lr * std::pow(cfg_.lr_decay_factor, epoch / cfg_.lr_decay_every);
}

void Trainer::step(std::int64_t t) {
  const std::size_t dim = model_.param_count();
  const std::size_t n_train = splits_.train.rows();
  std::vector<double> update(dim, 0.0);
  std::vector<double> sample_grad(dim);

  if (has_public_) {
    RngStream batch_stream(cfg_.run_seed, StreamPurpose::kPublicSample, t);
    std::vector<std::size_t> batch = uniform_sample(n_train, public_batch_, batch_stream);
    std::vector<double> mean(dim, 0.0);
    for (std::size_t pos = 0; pos < batch.size(); ++pos) {
      RngStream drop(cfg_.run_seed, StreamPurpose::kDropoutPublic, t, pos);
      DropoutMasks masks = DropoutMasks::draw(model_.config(), drop);
      double loss = 0.0;
      per_sample_grad_clean(model_, enc_public_.row(batch[pos]),
                            splits_.train.label(batch[pos]), masks, sample_grad,
                            &loss);
      if (!std::isfinite(loss))
        throw internal_error("train: non-finite public loss at step " +
                             std::to_string(t));
      for (std::size_t j = 0; j < dim; ++j) mean[j] += sample_grad[j];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t j = 0; j < dim; ++j)
      update[j] += public_weight_ * mean[j] * inv;
  }

  if (has_private_) {
    RngStream batch_stream(cfg_.run_seed, StreamPurpose::kPrivateSample, t);
    std::vector<std::size_t> batch = poisson_sample(n_train, sample_rate_, batch_stream);
    std::vector<std::vector<double>> clipped;
    clipped.reserve(batch.size());
    for (std::size_t pos = 0; pos < batch.size(); ++pos) {
      RngStream drop(cfg_.run_seed, StreamPurpose::kDropoutPrivate, t, pos);
      DropoutMasks masks = DropoutMasks::draw(model_.config(), drop);
      double loss = 0.0;
      std::span<const double> reference =
          private_uses_reference_ ? enc_priv_ref_.row(batch[pos])
                                  : std::span<const double>{};
      per_sample_grad_private(model_, variant_, cfg_.beta,
                              enc_priv_orig_.row(batch[pos]), reference,
                              splits_.train.label(batch[pos]), masks, sample_grad,
                              &loss);
      if (!std::isfinite(loss))
        throw internal_error("train: non-finite private loss at step " +
                             std::to_string(t));
      clip_in_place(sample_grad, cfg_.clip_norm);
      clipped.push_back(sample_grad);
    }
    RngStream noise(cfg_.run_seed, StreamPurpose::kGaussianNoise, t);
    std::vector<double> noisy =
        noisy_private_mean(clipped, dim, cfg_.clip_norm, sigma_,
                           std::max<std::size_t>(1, batch.size()), noise);
    for (std::size_t j = 0; j < dim; ++j) update[j] += private_weight_ * noisy[j];
  }

  const double lr = lr_at(t);
  std::span<double> params = model_.params();
  for (std::size_t j = 0; j < dim; ++j) {
    params[j] -= lr * update[j];
    if (!std::isfinite(params[j]))
      throw internal_error("train: non-finite parameter after step " +
                           std::to_string(t) + " (" + method_name(cfg_.method) + ")");
  }
}

ScoredPredictions Trainer::score(const EncodedData& enc,
                                 const std::vector<int>& labels) const {
  ScoredPredictions p;
  p.scores.resize(enc.rows);
  p.labels = labels;
  for (std::size_t i = 0; i < enc.rows; ++i)
    p.scores[i] = model_.logit_eval(enc.row(i));
  return p;
}

ScoredPredictions Trainer::score_validation() const {
  return score(enc_val_, splits_.val.labels());
}

ScoredPredictions Trainer::score_test() const {
  return score(enc_test_, splits_.test.labels());
}

RunResult Trainer::run() {
  auto started = std::chrono::steady_clock::now();
  RunResult result;
  result.config = cfg_;
  result.sigma_used = sigma_;
  result.sample_rate_used = sample_rate_;
  result.public_batch_used = static_cast<int>(public_batch_);
  result.delta_used = delta_;

  auto epsilon_at = [&](std::int64_t steps) -> double {
    if (!has_private_) {
      // Methods that never touch original private values carry no privacy
      // cost; sgd_org reads them with no mechanism at all.
      return cfg_.method == Method::kSgdOrg ? kInf : 0.0;
    }
    if (steps == 0) return 0.0;
    if (sigma_ <= 0.0) return kInf;
    return accountant_->epsilon(delta_, steps);
  };

  std::vector<double> best_params(model_.params().begin(), model_.params().end());
  double best_val = -1.0;
  int best_epoch = 0;

  auto eval_val = [&]() {
    ScoredPredictions p = score_validation();
    EpochMetrics m;
    m.val_auprc = auprc(p);
    m.val_auroc = auroc(p);
    return m;
  };

  if (cfg_.epochs == 0) {
    EpochMetrics m = eval_val();
    best_val = m.val_auprc;
  } else {
    std::int64_t t = 0;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      for (int s = 0; s < steps_per_epoch_; ++s, ++t) step(t);
      EpochMetrics m = eval_val();
      m.epoch = epoch;
      m.epsilon_spent = epsilon_at(t);
      result.per_epoch.push_back(m);
      if (m.val_auprc > best_val) {
        best_val = m.val_auprc;
        best_epoch = epoch;
        best_params.assign(model_.params().begin(), model_.params().end());
      }
    }
    result.steps_run = t;
  }

  // Test metrics come from the best-validation checkpoint.
  std::copy(best_params.begin(), best_params.end(), model_.params().begin());
  result.best_epoch = best_epoch;
  result.val_auprc_best = best_val;
  ScoredPredictions test_scores = score_test();
  result.test_auprc = auprc(test_scores);
  result.test_auroc = auroc(test_scores);
  result.test_report = classification_report(test_scores, 0.0);
  result.achieved_epsilon = epsilon_at(result.steps_run);
  result.achieved_delta = has_private_ ? delta_ : 0.0;
  result.best_model = std::make_shared<MlpModel>(model_);

  if (cfg_.method == Method::kSgdHybrid || cfg_.method == Method::kSgdPub) {
    if (splits_.train.private_reads() != 0 || splits_.val.private_reads() != 0)
      throw internal_error("train: " + method_name(cfg_.method) +
                           " read original private columns");
  }

  auto finished = std::chrono::steady_clock::now();
  result.wall_clock_sec =
      std::chrono::duration<double>(finished - started).count();
  return result;
}

RunResult train(const SplitSet& splits, const HybridSet* hybrid,
                const TrainConfig& config) {
  Trainer trainer(splits, hybrid, config);
  return trainer.run();
}

}  // namespace featdp
