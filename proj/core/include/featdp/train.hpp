#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "featdp/dataset.hpp"
#include "featdp/impute.hpp"
#include "featdp/metrics.hpp"
#include "featdp/model.hpp"
#include "featdp/privacy.hpp"

namespace featdp {

enum class Method {
  kSgdOrg,
  kSgdHybrid,
  kSgdPub,
  kDpSgd,
  kNaiveFusion,
  kNaiveFusionPub,
  kFeatureDp,
  kCalibratedFusion,
  kFusionDp,
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);
const std::vector<Method>& all_methods();

struct TrainConfig {
  Method method = Method::kFusionDp;
  int epochs = 13;
  double lr = 0.01;
  double lr_decay_factor = 1.0;  // multiplies lr every lr_decay_every epochs
  int lr_decay_every = 0;        // 0 = constant schedule
  double clip_norm = 1.0;        // C
  double epsilon = 0.0;          // <= 0: no target
  double delta = 0.0;            // <= 0: defaults to n_train^-1.1
  double sigma = -1.0;           // < 0: calibrate from (epsilon, delta)
  double sample_rate = 0.0;      // p; <= 0: expected private batch of 256
  int public_batch = 0;          // m'; <= 0: 4x expected private batch
  double alpha = 1.0;            // private-branch mixing weight
  double beta = 0.0;             // representation-consistency weight
  double lambda = 0.5;           // naive-fusion averaging weight
  std::uint64_t run_seed = 1;
  std::vector<std::size_t> hidden = {64, 32, 16};

  void validate() const;
  bool has_private_branch() const;
  bool uses_hybrid() const;
  bool uses_masked() const;
};

struct SplitSet {
  Dataset support;
  Dataset train;
  Dataset val;
  Dataset test;
};

struct HybridSet {
  HybridDataset train;
  std::optional<HybridDataset> val;  // needed only by sgd_hybrid evaluation
  std::optional<HybridDataset> test;
};

struct EpochMetrics {
  int epoch = 0;
  double val_auprc = 0.0;
  double val_auroc = 0.0;
  double epsilon_spent = 0.0;  // infinity when no guarantee applies
};

struct RunResult {
  TrainConfig config;
  // resolved mechanism parameters
  double sigma_used = 0.0;
  double sample_rate_used = 0.0;
  int public_batch_used = 0;
  std::int64_t steps_run = 0;
  double delta_used = 0.0;

  std::vector<EpochMetrics> per_epoch;
  int best_epoch = 0;
  double val_auprc_best = 0.0;
  double test_auprc = 0.0;
  double test_auroc = 0.0;
  ClassificationReport test_report;
  double achieved_epsilon = 0.0;
  double achieved_delta = 0.0;

  std::shared_ptr<MlpModel> best_model;  // checkpoint of the best epoch
  double wall_clock_sec = 0.0;  // recorded in manifests only, never in result JSON
};

/// One training run. Stream naming, with t the 0-based step index and i the
/// 0-based position inside the sorted batch:
///   private batch  (run_seed, kPrivateSample, t)
///   public batch   (run_seed, kPublicSample, t)
///   noise release  (run_seed, kGaussianNoise, t)
///   dropout, public sample i   (run_seed, kDropoutPublic, t, i)
///   dropout, private sample i  (run_seed, kDropoutPrivate, t, i) — shared
///                              between the x and x~ passes of that sample
///   masked data    (run_seed, kMask, split index 0/1/2)
class Trainer {
 public:
  /// `hybrid` may be null for methods that do not consume hybrid data.
  Trainer(const SplitSet& splits, const HybridSet* hybrid, TrainConfig config);

  double sigma() const { return sigma_; }
  double sample_rate() const { return sample_rate_; }
  std::size_t public_batch() const { return public_batch_; }
  int steps_per_epoch() const { return steps_per_epoch_; }
  std::int64_t total_steps() const { return total_steps_; }
  double delta() const { return delta_; }
  double lr_at(std::int64_t t) const;

  MlpModel& model() { return model_; }
  const MlpModel& model() const { return model_; }

  /// Executes step t (public branch mean, private branch
  /// clip+noise+divide, combined parameter update).
  void step(std::int64_t t);

  RunResult run();

  /// Validation/test scores of the current parameters on the
  /// method-appropriate eval inputs (eval mode).
  ScoredPredictions score_validation() const;
  ScoredPredictions score_test() const;

 private:
  struct EncodedData {
    std::size_t rows = 0;
    std::size_t width = 0;
    std::vector<double> cells;
    std::span<const double> row(std::size_t i) const {
      return {cells.data() + i * width, width};
    }
  };
  static EncodedData encode_dataset(const Dataset& ds);
  ScoredPredictions score(const EncodedData& enc, const std::vector<int>& labels) const;

  const SplitSet& splits_;
  const HybridSet* hybrid_;
  TrainConfig cfg_;

  // wiring resolved from the method
  bool has_public_ = false;
  bool has_private_ = false;
  double public_weight_ = 1.0;
  double private_weight_ = 1.0;
  PrivateLossVariant variant_ = PrivateLossVariant::kNaive;
  bool private_uses_reference_ = false;

  std::optional<HybridDataset> masked_train_, masked_val_, masked_test_;

  EncodedData enc_public_;       // public-branch inputs
  EncodedData enc_priv_orig_;    // private-branch original inputs
  EncodedData enc_priv_ref_;     // private-branch x~ inputs
  EncodedData enc_val_, enc_test_;

  double sigma_ = 0.0;
  double sample_rate_ = 1.0;
  std::size_t public_batch_ = 0;
  int steps_per_epoch_ = 0;
  std::int64_t total_steps_ = 0;
  double delta_ = 0.0;
  std::optional<RdpAccountant> accountant_;

  MlpModel model_;
};

RunResult train(const SplitSet& splits, const HybridSet* hybrid,
                const TrainConfig& config);

}  // namespace featdp
