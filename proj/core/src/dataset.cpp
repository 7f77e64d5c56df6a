#include "featdp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "featdp/error.hpp"

namespace featdp {

namespace {

bool is_missing(double v) { return std::isnan(v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(field);
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

void format_value(char* buf, std::size_t buflen, double v) {
  std::snprintf(buf, buflen, "%.17g", v);
}

}  // namespace

ColumnAccessAudit::ColumnAccessAudit(std::size_t column_count)
    : reads_(column_count) {
  for (auto& r : reads_) r.store(0, std::memory_order_relaxed);
}

void ColumnAccessAudit::record(std::size_t column) const {
  reads_[column].fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t ColumnAccessAudit::reads(std::size_t column) const {
  return reads_[column].load(std::memory_order_relaxed);
}

std::uint64_t ColumnAccessAudit::total_reads(
    const std::vector<std::size_t>& columns) const {
  std::uint64_t total = 0;
  for (std::size_t c : columns) total += reads(c);
  return total;
}

Dataset::Dataset(FeatureSchema schema, std::vector<double> features,
                 std::vector<int> labels)
    : schema_(std::move(schema)),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  if (features_.size() != labels_.size() * schema_.column_count())
    throw internal_error("dataset: feature matrix shape does not match labels");
  for (int y : labels_)
    if (y != 0 && y != 1) throw user_error("dataset: labels must be 0 or 1");
  stats_.assign(schema_.column_count(), ColumnStats{});
}

double Dataset::cell(std::size_t row, std::size_t col) const {
  if (audit_) audit_->record(col);
  return features_[row * cols() + col];
}

void Dataset::copy_row(std::size_t row, std::span<double> out) const {
  const std::size_t d = cols();
  if (audit_)
    for (std::size_t j = 0; j < d; ++j) audit_->record(j);
  const double* src = features_.data() + row * d;
  std::copy(src, src + d, out.begin());
}

void Dataset::set_cell(std::size_t row, std::size_t col, double value) {
  features_[row * cols() + col] = value;
}

void Dataset::enable_audit() const {
  audit_ = std::make_shared<ColumnAccessAudit>(cols());
}

std::uint64_t Dataset::private_reads() const {
  if (!audit_) return 0;
  return audit_->total_reads(schema_.private_set());
}

void Dataset::set_standardization(std::vector<ColumnStats> stats) {
  if (stats.size() != cols())
    throw internal_error("dataset: standardization size mismatch");
  stats_ = std::move(stats);
}

void Dataset::set_vocabulary(std::vector<std::vector<std::string>> vocab) {
  vocab_ = std::move(vocab);
}

Dataset Dataset::take_rows(const std::vector<std::size_t>& indices) const {
  const std::size_t d = cols();
  std::vector<double> feats(indices.size() * d);
  std::vector<int> labs(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = features_.data() + indices[i] * d;
    std::copy(src, src + d, feats.data() + i * d);
    labs[i] = labels_[indices[i]];
  }
  Dataset out(schema_, std::move(feats), std::move(labs));
  out.stats_ = stats_;
  out.vocab_ = vocab_;
  return out;
}

void encode_row(const FeatureSchema& schema, std::span<const double> raw,
                std::span<double> encoded) {
  std::size_t k = 0;
  for (std::size_t j = 0; j < schema.column_count(); ++j) {
    const Column& c = schema.column(j);
    if (c.kind == ColumnKind::kNumeric) {
      encoded[k++] = raw[j];
    } else {
      int code = static_cast<int>(std::llround(raw[j]));
      for (int v = 0; v < c.cardinality; ++v) encoded[k++] = (v == code) ? 1.0 : 0.0;
    }
  }
}

// --- CSV ingestion ------------------------------------------------------

Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                 const std::vector<std::vector<std::string>>* fixed_vocab) {
  std::ifstream in(path);
  if (!in) throw user_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("csv: empty file " + path.string());

  std::vector<std::string> header = split_csv_line(line);
  const std::size_t d = schema.column_count();
  // Map schema columns and the label column onto header positions.
  std::vector<std::size_t> feature_pos(d);
  std::size_t label_pos = 0;
  {
    auto find = [&](const std::string& name) -> std::size_t {
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
      throw user_error("csv: header of " + path.string() +
                       " is missing column '" + name + "'");
    };
    for (std::size_t j = 0; j < d; ++j) feature_pos[j] = find(schema.column(j).name);
    label_pos = find(schema.label_column());
  }

  std::vector<std::vector<std::string>> vocab(d);
  if (fixed_vocab) {
    if (fixed_vocab->size() != d)
      throw user_error("csv: vocabulary does not match schema");
    vocab = *fixed_vocab;
  }

  std::vector<double> features;
  std::vector<int> labels;
  std::size_t rowno = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++rowno;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw user_error("csv: row " + std::to_string(rowno) + " of " +
                       path.string() + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = fields[feature_pos[j]];
      const Column& col = schema.column(j);
      if (cell.empty()) {
        features.push_back(std::nan(""));
        continue;
      }
      if (col.kind == ColumnKind::kNumeric) {
        auto v = parse_double(cell);
        if (!v)
          throw user_error("csv: row " + std::to_string(rowno) + ", column '" +
                           col.name + "': cannot parse numeric value '" + cell + "'");
        features.push_back(*v);
      } else {
        auto& levels = vocab[j];
        auto it = std::find(levels.begin(), levels.end(), cell);
        std::size_t code;
        if (it == levels.end()) {
          if (fixed_vocab)
            throw user_error("csv: row " + std::to_string(rowno) + ", column '" +
                             col.name + "': unknown categorical level '" + cell + "'");
          if (static_cast<int>(levels.size()) >= col.cardinality)
            throw user_error("csv: row " + std::to_string(rowno) + ", column '" +
                             col.name + "': more levels than declared cardinality " +
                             std::to_string(col.cardinality));
          levels.push_back(cell);
          code = levels.size() - 1;
        } else {
          code = static_cast<std::size_t>(it - levels.begin());
        }
        features.push_back(static_cast<double>(code));
      }
    }
    const std::string& lab = fields[label_pos];
    auto v = parse_double(lab);
    if (!v || (*v != 0.0 && *v != 1.0))
      throw user_error("csv: row " + std::to_string(rowno) + ", column '" +
                       schema.label_column() + "': label must be 0 or 1, got '" +
                       lab + "'");
    labels.push_back(static_cast<int>(*v));
  }
  Dataset ds(schema, std::move(features), std::move(labels));
  ds.set_vocabulary(std::move(vocab));
  return ds;
}

Dataset read_dataset_csv(const std::filesystem::path& path,
                         const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw user_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("csv: empty file " + path.string());
  std::vector<std::string> header = split_csv_line(line);
  const std::size_t d = schema.column_count();
  if (header.size() != d + 1)
    throw user_error("csv: " + path.string() + " has " +
                     std::to_string(header.size()) + " columns, expected " +
                     std::to_string(d + 1));
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != schema.column(j).name)
      throw user_error("csv: " + path.string() + " header mismatch at column " +
                       std::to_string(j) + ": '" + header[j] + "' vs '" +
                       schema.column(j).name + "'");
  if (header[d] != schema.label_column())
    throw user_error("csv: " + path.string() + " label column mismatch");

  std::vector<double> features;
  std::vector<int> labels;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != d + 1)
      throw user_error("csv: row " + std::to_string(rowno) + " of " +
                       path.string() + " malformed");
    for (std::size_t j = 0; j < d; ++j) {
      auto v = parse_double(fields[j]);
      if (!v)
        throw user_error("csv: row " + std::to_string(rowno) + ", column '" +
                         schema.column(j).name + "': cannot parse '" + fields[j] + "'");
      features.push_back(*v);
    }
    auto y = parse_double(fields[d]);
    if (!y) throw user_error("csv: row " + std::to_string(rowno) + ": bad label");
    labels.push_back(static_cast<int>(*y));
  }
  return Dataset(schema, std::move(features), std::move(labels));
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("csv: cannot write " + path.string());
  const FeatureSchema& schema = ds.schema();
  for (std::size_t j = 0; j < schema.column_count(); ++j)
    out << schema.column(j).name << ',';
  out << schema.label_column() << '\n';
  char buf[64];
  const std::vector<double>& raw = ds.storage();
  const std::size_t d = ds.cols();
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      format_value(buf, sizeof buf, raw[i * d + j]);
      out << buf << ',';
    }
    out << ds.label(i) << '\n';
  }
}

void save_scaler(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("scaler: cannot write " + path.string());
  out << "# per-column standardization (mean stddev)\n";
  char mbuf[64], sbuf[64];
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const ColumnStats& s = ds.standardization()[j];
    format_value(mbuf, sizeof mbuf, s.mean);
    format_value(sbuf, sizeof sbuf, s.stddev);
    out << "column " << ds.schema().column(j).name << ' ' << mbuf << ' ' << sbuf << '\n';
  }
}

std::vector<ColumnStats> load_scaler(const FeatureSchema& schema,
                                     const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("scaler: cannot open " + path.string());
  std::vector<ColumnStats> stats(schema.column_count());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string keyword, name;
    ColumnStats s;
    row >> keyword >> name >> s.mean >> s.stddev;
    if (keyword != "column") throw user_error("scaler: malformed line in " + path.string());
    stats[schema.index_of(name)] = s;
  }
  return stats;
}

// --- preprocessing ------------------------------------------------------

Dataset preprocess(const Dataset& raw, const PreprocessConfig& config,
                   std::uint64_t rng_seed) {
  if (config.missing_threshold <= 0.0 || config.missing_threshold > 1.0)
    throw user_error("preprocess: missing_threshold must be in (0, 1]");
  if (config.target_prevalence <= 0.0 || config.target_prevalence >= 1.0)
    throw user_error("preprocess: target_prevalence must be in (0, 1)");
  const std::size_t n = raw.rows();
  const std::size_t d = raw.cols();
  const std::vector<double>& cells = raw.storage();

  // 1. Drop columns whose missing fraction exceeds the threshold.
  std::vector<std::size_t> dropped;
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t missing = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (is_missing(cells[i * d + j])) ++missing;
    if (n > 0 && static_cast<double>(missing) / n > config.missing_threshold)
      dropped.push_back(j);
  }
  FeatureSchema schema = raw.schema().without_columns(dropped);
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < d; ++j)
    if (!std::binary_search(dropped.begin(), dropped.end(), j)) kept.push_back(j);

  // 2. Fill remaining missing cells: numeric -> column median, categorical
  //    -> column mode.
  const std::size_t dk = kept.size();
  std::vector<double> fill(dk, 0.0);
  for (std::size_t jj = 0; jj < dk; ++jj) {
    std::size_t j = kept[jj];
    std::vector<double> present;
    present.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = cells[i * d + j];
      if (!is_missing(v)) present.push_back(v);
    }
    if (present.empty())
      throw user_error("preprocess: column '" + raw.schema().column(j).name +
                       "' is entirely missing yet below the drop threshold");
    if (schema.column(jj).kind == ColumnKind::kNumeric) {
      std::sort(present.begin(), present.end());
      std::size_t m = present.size();
      fill[jj] = (m % 2 == 1) ? present[m / 2]
                              : 0.5 * (present[m / 2 - 1] + present[m / 2]);
    } else {
      std::vector<std::size_t> counts(schema.column(jj).cardinality, 0);
      for (double v : present) counts[static_cast<std::size_t>(std::llround(v))]++;
      fill[jj] = static_cast<double>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
  }

  std::vector<double> features(n * dk);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t jj = 0; jj < dk; ++jj) {
      double v = cells[i * d + kept[jj]];
      features[i * dk + jj] = is_missing(v) ? fill[jj] : v;
    }

  // 3. Downsample negatives (never positives) toward the target prevalence.
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < n; ++i)
    (raw.label(i) == 1 ? positives : negatives).push_back(i);
  if (positives.empty()) throw user_error("preprocess: dataset has no positive rows");

  const double t = config.target_prevalence;
  auto negatives_wanted = static_cast<std::size_t>(std::llround(
      static_cast<double>(positives.size()) * (1.0 - t) / t));
  std::vector<std::size_t> kept_rows = positives;
  if (negatives_wanted >= negatives.size()) {
    kept_rows.insert(kept_rows.end(), negatives.begin(), negatives.end());
  } else {
    RngStream stream(rng_seed, StreamPurpose::kDownsample);
    std::vector<std::size_t> pool = negatives;
    for (std::size_t i = 0; i < negatives_wanted; ++i) {
      std::size_t pick = i + stream.next_below(pool.size() - i);
      std::swap(pool[i], pool[pick]);
    }
    kept_rows.insert(kept_rows.end(), pool.begin(), pool.begin() + negatives_wanted);
  }
  std::sort(kept_rows.begin(), kept_rows.end());

  std::vector<double> out_features(kept_rows.size() * dk);
  std::vector<int> out_labels(kept_rows.size());
  for (std::size_t i = 0; i < kept_rows.size(); ++i) {
    std::copy_n(features.data() + kept_rows[i] * dk, dk, out_features.data() + i * dk);
    out_labels[i] = raw.label(kept_rows[i]);
  }
  Dataset out(schema, std::move(out_features), std::move(out_labels));
  // Carry vocabulary entries for the kept columns.
  if (!raw.vocabulary().empty()) {
    std::vector<std::vector<std::string>> vocab;
    vocab.reserve(dk);
    for (std::size_t j : kept) vocab.push_back(raw.vocabulary()[j]);
    out.set_vocabulary(std::move(vocab));
  }
  return out;
}

SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t rng_seed) {
  spec.validate();
  const std::size_t n = ds.rows();
  if (n < 10) throw user_error("split: need at least 10 rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream stream(rng_seed, StreamPurpose::kSplitShuffle);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = stream.next_below(i + 1);
    std::swap(order[i], order[j]);
  }

  auto portion = [&](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
  };
  std::size_t n_support = portion(spec.support_frac);
  std::size_t n_val = portion(spec.val_frac);
  std::size_t n_test = portion(spec.test_frac);
  std::size_t n_train = n - n_support - n_val - n_test;  // floor + remainder
  if (n_support < 1 || n_val < 1 || n_test < 1 || n_train < 1)
    throw user_error("split: a split would be smaller than 1 row");

  auto take = [&](std::size_t offset, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + offset, order.begin() + offset + count);
    std::sort(idx.begin(), idx.end());
    return ds.take_rows(idx);
  };
  SplitResult result{take(0, n_support), take(n_support, n_train),
                     take(n_support + n_train, n_val),
                     take(n_support + n_train + n_val, n_test)};
  return result;
}

std::vector<ColumnStats> standardize_fit(const Dataset& fit_split) {
  const std::size_t n = fit_split.rows();
  const std::size_t d = fit_split.cols();
  const std::vector<double>& cells = fit_split.storage();
  std::vector<ColumnStats> stats(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (fit_split.schema().column(j).kind != ColumnKind::kNumeric) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += cells[i * d + j];
    double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double c = cells[i * d + j] - mean;
      ss += c * c;
    }
    double stddev = std::sqrt(ss / static_cast<double>(n));
    stats[j].mean = mean;
    stats[j].stddev = (stddev > 0.0) ? stddev : 1.0;  // constant column: leave as-is
  }
  return stats;
}

void standardize_apply(Dataset& ds, const std::vector<ColumnStats>& stats) {
  const std::size_t d = ds.cols();
  for (std::size_t j = 0; j < d; ++j) {
    if (ds.schema().column(j).kind != ColumnKind::kNumeric) continue;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      double v = ds.storage()[i * d + j];
      ds.set_cell(i, j, (v - stats[j].mean) / stats[j].stddev);
    }
  }
  ds.set_standardization(stats);
}

void destandardize_apply(Dataset& ds, const std::vector<ColumnStats>& stats) {
  const std::size_t d = ds.cols();
  for (std::size_t j = 0; j < d; ++j) {
    if (ds.schema().column(j).kind != ColumnKind::kNumeric) continue;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      double v = ds.storage()[i * d + j];
      ds.set_cell(i, j, v * stats[j].stddev + stats[j].mean);
    }
  }
  ds.set_standardization(std::vector<ColumnStats>(d));
}

// --- synthetic data -----------------------------------------------------

namespace {

// Equicorrelation of the public Gaussian block.
constexpr double kPublicCorrelation = 0.35;
// Target standard deviation of the label logit; controls task difficulty.
constexpr double kLogitScale = 2.2;
// Block weights of the label logit. Most of the signal rides on the
// private features, so masking them is costly and imputing them matters.
constexpr double kPublicLabelWeight = 0.6;
constexpr double kPrivateLabelWeight = 1.25;

// Inverse CDF of the standard normal (Acklam's rational approximation);
// only used to place deterministic categorical thresholds.
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) return -normal_quantile(1.0 - p);
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Dataset generate_synthetic(std::size_t n, const FeatureSchema& schema,
                           double coupling, std::uint64_t rng_seed) {
  if (n < 10) throw user_error("synthetic: n must be >= 10");
  if (coupling < 0.0 || coupling > 1.0)
    throw user_error("synthetic: coupling must be in [0, 1]");
  if (schema.private_set().empty() || schema.public_set().empty())
    throw user_error("synthetic: schema needs at least one private and one public column");

  const std::size_t d = schema.column_count();
  const auto& pub = schema.public_set();
  const auto& priv = schema.private_set();

  RngStream weights_stream(rng_seed, StreamPurpose::kSynthesis, /*step=*/0);
  RngStream noise_stream(rng_seed, StreamPurpose::kSynthesis, /*step=*/1);
  RngStream label_stream(rng_seed, StreamPurpose::kLabelDraw);

  // Unit-variance direction of the public block for each private column and
  // for the label. Variance of w.x under the equicorrelated covariance is
  // (1-r)|w|^2 + r(sum w)^2; normalize with that exactly.
  auto draw_direction = [&](RngStream& s) {
    std::vector<double> w(pub.size());
    double norm2 = 0.0, sum = 0.0;
    for (double& wi : w) {
      wi = s.next_gaussian();
      norm2 += wi * wi;
      sum += wi;
    }
    double var = (1.0 - kPublicCorrelation) * norm2 + kPublicCorrelation * sum * sum;
    double scale = 1.0 / std::sqrt(var);
    for (double& wi : w) wi *= scale;
    return w;
  };
  std::vector<std::vector<double>> priv_dirs(priv.size());
  for (auto& dir : priv_dirs) dir = draw_direction(weights_stream);
  std::vector<double> label_pub_dir = draw_direction(weights_stream);
  std::vector<double> label_priv_w(priv.size());
  {
    double norm2 = 0.0;
    for (double& wi : label_priv_w) {
      wi = weights_stream.next_gaussian();
      norm2 += wi * wi;
    }
    for (double& wi : label_priv_w) wi /= std::sqrt(norm2);
  }

  std::vector<double> features(n * d, 0.0);
  std::vector<double> raw_logits(n);
  const double sqrt_r = std::sqrt(kPublicCorrelation);
  const double sqrt_1mr = std::sqrt(1.0 - kPublicCorrelation);
  const double mix = coupling;
  const double mix_noise = std::sqrt(1.0 - coupling * coupling);

  std::vector<double> pub_values(pub.size());
  std::vector<double> priv_signal(priv.size());
  for (std::size_t i = 0; i < n; ++i) {
    double factor = noise_stream.next_gaussian();
    for (std::size_t k = 0; k < pub.size(); ++k) {
      pub_values[k] = sqrt_r * factor + sqrt_1mr * noise_stream.next_gaussian();
      const Column& col = schema.column(pub[k]);
      if (col.kind == ColumnKind::kNumeric) {
        features[i * d + pub[k]] = pub_values[k];
      } else {
        // Quantile-bucket the Gaussian into equal-probability codes.
        int code = 0;
        for (int v = 1; v < col.cardinality; ++v)
          if (pub_values[k] > normal_quantile(static_cast<double>(v) / col.cardinality))
            code = v;
        features[i * d + pub[k]] = static_cast<double>(code);
      }
    }
    for (std::size_t k = 0; k < priv.size(); ++k) {
      double base = 0.0;
      for (std::size_t m = 0; m < pub.size(); ++m) base += priv_dirs[k][m] * pub_values[m];
      double value = mix * base + mix_noise * noise_stream.next_gaussian();
      priv_signal[k] = value;
      const Column& col = schema.column(priv[k]);
      if (col.kind == ColumnKind::kNumeric) {
        features[i * d + priv[k]] = value;
      } else {
        int code = 0;
        for (int v = 1; v < col.cardinality; ++v)
          if (value > normal_quantile(static_cast<double>(v) / col.cardinality))
            code = v;
        features[i * d + priv[k]] = static_cast<double>(code);
      }
    }
    double logit = 0.0;
    for (std::size_t m = 0; m < pub.size(); ++m)
      logit += kPublicLabelWeight * label_pub_dir[m] * pub_values[m];
    for (std::size_t k = 0; k < priv.size(); ++k)
      logit += kPrivateLabelWeight * label_priv_w[k] * priv_signal[k];
    raw_logits[i] = logit;
  }

  // Standardize the logit to the target scale, then calibrate the intercept
  // by bisection so the mean positive probability hits ~0.15.
  double mean = std::accumulate(raw_logits.begin(), raw_logits.end(), 0.0) / n;
  double ss = 0.0;
  for (double z : raw_logits) ss += (z - mean) * (z - mean);
  double stddev = std::sqrt(ss / n);
  if (stddev <= 0.0) stddev = 1.0;
  for (double& z : raw_logits) z = (z - mean) / stddev * kLogitScale;

  const double target = 0.15;
  double lo = -30.0, hi = 30.0;
  for (int iter = 0; iter < 200; ++iter) {
    double b = 0.5 * (lo + hi);
    double prob = 0.0;
    for (double z : raw_logits) prob += sigmoid(z + b);
    prob /= static_cast<double>(n);
    (prob > target ? hi : lo) = b;
  }
  double intercept = 0.5 * (lo + hi);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = label_stream.next_bernoulli(sigmoid(raw_logits[i] + intercept)) ? 1 : 0;

  return Dataset(schema, std::move(features), std::move(labels));
}

FeatureSchema default_synthetic_schema() {
  std::vector<Column> columns;
  auto numeric = [](std::string name, bool priv) {
    return Column{std::move(name), ColumnKind::kNumeric, 0, priv};
  };
  auto categorical = [](std::string name, int card, bool priv) {
    return Column{std::move(name), ColumnKind::kCategorical, card, priv};
  };
  // Public vitals / labs.
  for (const char* name : {"hr", "sbp", "dbp", "temp", "resp", "spo2", "wbc",
                           "lactate", "creatinine", "glucose"})
    columns.push_back(numeric(name, false));
  // Private demographic-style columns.
  columns.push_back(numeric("age", true));
  columns.push_back(categorical("gender", 2, true));
  columns.push_back(categorical("icu_unit", 4, true));
  columns.push_back(numeric("admit_to_icu_hours", true));
  columns.push_back(numeric("icu_los", true));
  return FeatureSchema(std::move(columns));
}

}  // namespace featdp
