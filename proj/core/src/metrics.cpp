#include "featdp/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "featdp/error.hpp"

namespace featdp {

namespace {

void require_both_classes(const ScoredPredictions& p) {
  if (p.scores.size() != p.labels.size())
    throw user_error("metrics: scores and labels differ in length");
  std::size_t positives = 0;
  for (int y : p.labels) positives += (y == 1);
  if (positives == 0 || positives == p.labels.size())
    throw user_error("metrics: need at least one positive and one negative");
}

std::vector<std::size_t> order_by_score_desc(const ScoredPredictions& p) {
  std::vector<std::size_t> order(p.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p.scores[a] > p.scores[b];
  });
  return order;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double auprc(const ScoredPredictions& p) {
  require_both_classes(p);
  const std::size_t n = p.scores.size();
  std::size_t total_pos = 0;
  for (int y : p.labels) total_pos += (y == 1);

  std::vector<std::size_t> order = order_by_score_desc(p);
  double ap = 0.0;
  std::size_t tp = 0, tp_prev = 0, rank = 0;
  std::size_t i = 0;
  while (i < n) {
    // Consume one block of equal scores.
    double block_score = p.scores[order[i]];
    while (i < n && p.scores[order[i]] == block_score) {
      tp += (p.labels[order[i]] == 1);
      ++rank;
      ++i;
    }
    if (tp != tp_prev) {
      double recall_inc = static_cast<double>(tp - tp_prev) / static_cast<double>(total_pos);
      double precision = static_cast<double>(tp) / static_cast<double>(rank);
      ap += recall_inc * precision;
      tp_prev = tp;
    }
  }
  return ap;
}

double auroc(const ScoredPredictions& p) {
  require_both_classes(p);
  const std::size_t n = p.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p.scores[a] < p.scores[b];
  });

  // Midranks over tie groups; ranks are dyadic so the sums are exact.
  double rank_sum_pos = 0.0;
  std::size_t total_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && p.scores[order[j]] == p.scores[order[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (p.labels[order[k]] == 1) {
        rank_sum_pos += midrank;
        ++total_pos;
      }
    i = j;
  }
  double n_pos = static_cast<double>(total_pos);
  double n_neg = static_cast<double>(n - total_pos);
  double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

ClassificationReport classification_report(const ScoredPredictions& p,
                                           double threshold) {
  if (p.scores.size() != p.labels.size())
    throw user_error("metrics: scores and labels differ in length");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < p.scores.size(); ++i) {
    bool predicted = p.scores[i] >= threshold;
    bool actual = p.labels[i] == 1;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  ClassificationReport r;
  r.precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = (r.precision + r.recall > 0.0)
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.accuracy = p.scores.empty()
                   ? 0.0
                   : static_cast<double>(tp + tn) / static_cast<double>(p.scores.size());
  return r;
}

double wilcoxon_signed_rank_greater(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.size() != b.size())
    throw user_error("wilcoxon: paired samples differ in length");
  if (a.size() < 5) throw user_error("wilcoxon: need at least 5 pairs");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw user_error("wilcoxon: all differences are zero");
  const std::size_t n = diffs.size();

  // Midranks of |d|.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::fabs(diffs[x]) < std::fabs(diffs[y]);
  });
  std::vector<double> ranks(n);
  std::vector<std::size_t> tie_sizes;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && std::fabs(diffs[order[j]]) == std::fabs(diffs[order[i]])) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = midrank;
    if (j - i > 1) tie_sizes.push_back(j - i);
    i = j;
  }

  double w_observed = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w_observed += ranks[k];

  if (n <= 20) {
    // Exact null: every sign assignment equally likely.
    const std::uint64_t assignments = 1ull << n;
    std::uint64_t at_least = 0;
    for (std::uint64_t mask = 0; mask < assignments; ++mask) {
      double w = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (mask & (1ull << k)) w += ranks[k];
      if (w >= w_observed - 1e-12) ++at_least;
    }
    return static_cast<double>(at_least) / static_cast<double>(assignments);
  }

  // Normal approximation with tie correction and continuity correction.
  double dn = static_cast<double>(n);
  double mean = dn * (dn + 1.0) / 4.0;
  double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  for (std::size_t t : tie_sizes) {
    double dt = static_cast<double>(t);
    var -= dt * (dt * dt - 1.0) / 48.0;
  }
  double z = (w_observed - mean - 0.5) / std::sqrt(var);
  double p = 1.0 - normal_cdf(z);
  return std::min(1.0, std::max(p, 1e-300));
}

ScoredPredictions read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("scores: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("scores: empty file");
  ScoredPredictions p;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, score, label;
    if (!std::getline(row, id, ',') || !std::getline(row, score, ',') ||
        !std::getline(row, label, ','))
      throw user_error("scores: malformed row " + std::to_string(rowno));
    double s = 0.0;
    auto [sp, sec] = std::from_chars(score.data(), score.data() + score.size(), s);
    if (sec != std::errc() || sp != score.data() + score.size())
      throw user_error("scores: bad score at row " + std::to_string(rowno));
    int y = 0;
    if (label == "1") y = 1;
    else if (label != "0")
      throw user_error("scores: bad label at row " + std::to_string(rowno));
    p.scores.push_back(s);
    p.labels.push_back(y);
  }
  return p;
}

}  // namespace featdp
