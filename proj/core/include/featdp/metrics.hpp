#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace featdp {

/// Scores may be logits or probabilities; every metric here depends only on
/// their ordering.
struct ScoredPredictions {
  std::vector<double> scores;
  std::vector<int> labels;  // 0/1
};

/// Average precision: sum over descending-score blocks of
/// (recall increment) x (precision at the block end). Equal scores are
/// treated as one block. Requires both classes present.
double auprc(const ScoredPredictions& p);

/// Mann-Whitney form: P(score+ > score-) + 1/2 P(tie). Requires both
/// classes present.
double auroc(const ScoredPredictions& p);

struct ClassificationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Confusion-matrix metrics at `threshold` (score >= threshold is positive).
/// Conventions: precision = 0 with no positive predictions, f1 = 0 when
/// precision + recall = 0.
ClassificationReport classification_report(const ScoredPredictions& p,
                                           double threshold);

/// One-sided (greater) Wilcoxon signed-rank p-value for paired samples.
/// Zero differences are dropped; the distribution is exact (all sign
/// assignments enumerated) for up to 20 nonzero pairs and a tie-corrected
/// normal approximation above that.
double wilcoxon_signed_rank_greater(std::span<const double> a,
                                    std::span<const double> b);

/// Reads a scores CSV with header id,score,label.
ScoredPredictions read_scores_csv(const std::filesystem::path& path);

}  // namespace featdp
