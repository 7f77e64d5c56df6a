#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace featdp {

enum class ColumnKind { kNumeric, kCategorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  int cardinality = 0;  // categorical only, >= 2
  bool is_private = false;
};

/// Ordered feature columns with a disjoint public/private partition.
/// The public projection (drop all private columns) is the privacy unit:
/// two rows that agree on the public set are neighbors.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<Column> columns,
                         std::string label_column = "label");

  std::size_t column_count() const { return columns_.size(); }
  const Column& column(std::size_t j) const { return columns_[j]; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::string& label_column() const { return label_column_; }

  const std::vector<std::size_t>& private_set() const { return private_set_; }
  const std::vector<std::size_t>& public_set() const { return public_set_; }
  bool is_private(std::size_t j) const { return columns_[j].is_private; }

  /// Width after one-hot expansion of categorical columns.
  std::size_t encoded_width() const;

  std::size_t index_of(const std::string& name) const;  // throws if absent
  bool has_column(const std::string& name) const;

  /// Schema with the given columns removed (used when preprocessing drops
  /// high-missingness columns).
  FeatureSchema without_columns(const std::vector<std::size_t>& drop) const;

  bool operator==(const FeatureSchema& other) const;

 private:
  std::vector<Column> columns_;
  std::string label_column_ = "label";
  std::vector<std::size_t> private_set_;
  std::vector<std::size_t> public_set_;
};

FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const FeatureSchema& schema, const std::filesystem::path& path);

/// Fractions of rows assigned to the support/train/val/test splits.
struct SplitSpec {
  double support_frac = 0.10;
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.10;

  void validate() const;  // each > 0, sum to 1 within 1e-9
};

}  // namespace featdp
