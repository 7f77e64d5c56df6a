#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featdp/rng.hpp"
#include "featdp/schema.hpp"

namespace featdp {

/// Per-column read counters. Attached to a Dataset to prove that a code
/// path never looked at designated columns (the privacy firewall tests).
class ColumnAccessAudit {
 public:
  explicit ColumnAccessAudit(std::size_t column_count);
  void record(std::size_t column) const;
  std::uint64_t reads(std::size_t column) const;
  std::uint64_t total_reads(const std::vector<std::size_t>& columns) const;

 private:
  mutable std::vector<std::atomic<std::uint64_t>> reads_;
};

/// Per-numeric-column standardization parameters (identity for categoricals
/// and for columns never fitted).
struct ColumnStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Row-major feature matrix with binary labels and a feature schema.
/// Cells are read through `cell`/`copy_row`, which feed the access audit
/// when one is attached; `storage` bypasses the audit and is reserved for
/// serialization.
class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureSchema schema, std::vector<double> features,
          std::vector<int> labels);

  std::size_t rows() const { return labels_.size(); }
  std::size_t cols() const { return schema_.column_count(); }
  const FeatureSchema& schema() const { return schema_; }

  double cell(std::size_t row, std::size_t col) const;
  void copy_row(std::size_t row, std::span<double> out) const;
  int label(std::size_t row) const { return labels_[row]; }
  const std::vector<int>& labels() const { return labels_; }

  /// Unaudited access for serialization only; training and imputation code
  /// must go through cell()/copy_row().
  const std::vector<double>& storage() const { return features_; }

  void set_cell(std::size_t row, std::size_t col, double value);

  void enable_audit() const;
  const ColumnAccessAudit* audit() const { return audit_.get(); }
  std::uint64_t private_reads() const;

  const std::vector<ColumnStats>& standardization() const { return stats_; }
  void set_standardization(std::vector<ColumnStats> stats);

  /// String levels backing categorical codes, populated by ingestion.
  const std::vector<std::vector<std::string>>& vocabulary() const { return vocab_; }
  void set_vocabulary(std::vector<std::vector<std::string>> vocab);

  Dataset take_rows(const std::vector<std::size_t>& indices) const;

 private:
  FeatureSchema schema_;
  std::vector<double> features_;  // rows() x cols(), row-major
  std::vector<int> labels_;
  std::vector<ColumnStats> stats_;
  std::vector<std::vector<std::string>> vocab_;
  mutable std::shared_ptr<ColumnAccessAudit> audit_;
};

/// One-hot expands categorical cells of a raw schema row into a model input
/// vector of schema.encoded_width() entries.
void encode_row(const FeatureSchema& schema, std::span<const double> raw,
                std::span<double> encoded);

// --- ingestion ---------------------------------------------------------

/// Parse a user CSV (header row, empty cell = missing). Categorical strings
/// are mapped to integer codes in file order of first appearance; a
/// malformed cell is an error naming the row and column. When `vocab` is
/// given, unknown categorical levels are rejected instead of extending it.
Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                 const std::vector<std::vector<std::string>>* vocab = nullptr);

/// Internal split files: all cells numeric (categoricals as codes).
Dataset read_dataset_csv(const std::filesystem::path& path,
                         const FeatureSchema& schema);
void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

void save_scaler(const Dataset& ds, const std::filesystem::path& path);
std::vector<ColumnStats> load_scaler(const FeatureSchema& schema,
                                     const std::filesystem::path& path);

// --- preprocessing ------------------------------------------------------

struct PreprocessConfig {
  double missing_threshold = 0.70;   // drop columns missing more than this
  double target_prevalence = 0.15;   // downsample negatives to reach this
};

/// Drops high-missingness columns, median/mode-fills the remaining missing
/// cells, and downsamples negative rows (never positives) until the positive
/// prevalence matches the target within one row.
Dataset preprocess(const Dataset& raw, const PreprocessConfig& config,
                   std::uint64_t rng_seed);

struct SplitResult {
  Dataset support;
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Disjoint row partition by shuffled indices; support/val/test get
/// floor(frac*n) rows each and train receives the remainder.
SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t rng_seed);

/// Fit (mean, stddev) of numeric columns on `fit_split`, then rescale every
/// given dataset in place with those statistics.
std::vector<ColumnStats> standardize_fit(const Dataset& fit_split);
void standardize_apply(Dataset& ds, const std::vector<ColumnStats>& stats);
void destandardize_apply(Dataset& ds, const std::vector<ColumnStats>& stats);

// --- synthetic data -----------------------------------------------------

/// Desk-scale generator: public features are correlated Gaussians, private
/// features are noisy functions of the public ones with strength `coupling`
/// (1 = deterministic, 0 = independent), and the label is a logistic
/// function of both with the intercept calibrated to ~15% positives.
Dataset generate_synthetic(std::size_t n, const FeatureSchema& schema,
                           double coupling, std::uint64_t rng_seed);

/// The schema used by the `synth` command when none is supplied: ten public
/// vital-sign style numerics plus five private demographic-style columns.
FeatureSchema default_synthetic_schema();

}  // namespace featdp
