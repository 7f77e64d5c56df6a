#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "featdp/dataset.hpp"

namespace featdp {

/// A dataset whose private columns were replaced by imputed estimates
/// computed from public columns only; public columns are bit-identical to
/// the source.
class HybridDataset {
 public:
  HybridDataset() = default;
  HybridDataset(Dataset data, std::vector<bool> imputed_mask, std::string provenance);

  const Dataset& data() const { return data_; }
  const std::vector<bool>& imputed_mask() const { return imputed_mask_; }
  const std::string& provenance() const { return provenance_; }

 private:
  Dataset data_;
  std::vector<bool> imputed_mask_;
  std::string provenance_;
};

enum class ImputerKind { kMeanMode, kKnn, kExternalFile, kIdentityTestOnly };

std::string imputer_kind_name(ImputerKind kind);

/// Pluggable private-feature estimator. Fitting touches only the support
/// set; imputation reads only the target rows' public columns (except the
/// test-only identity imputer, which exists to exercise x~ = x paths and is
/// refused by training commands).
class Imputer {
 public:
  static Imputer mean_mode();
  static Imputer knn(int k);
  static Imputer external_file(std::filesystem::path path);
  static Imputer identity_test_only();

  ImputerKind kind() const { return kind_; }
  bool fitted() const { return fitted_; }
  std::string describe() const;

  void fit(const Dataset& support);
  HybridDataset impute(const Dataset& ds) const;

 private:
  Imputer() = default;

  ImputerKind kind_ = ImputerKind::kMeanMode;
  int k_ = 5;
  std::filesystem::path external_path_;
  bool fitted_ = false;

  FeatureSchema support_schema_;
  // mean_mode state: per private column, the support mean (numeric) or
  // mode (categorical).
  std::vector<double> fill_values_;
  // knn state: encoded public features of the support set plus raw private
  // targets, row-major.
  std::vector<double> support_public_encoded_;
  std::vector<double> support_private_;
  std::size_t support_rows_ = 0;
};

/// Builds a hybrid from externally imputed private values. The file holds a
/// header `id,<private column names...>`; id is the 0-based row index in
/// `ds` and every row must be present exactly once, in order.
HybridDataset load_external_hybrid(const Dataset& ds, const std::filesystem::path& path);

/// Writes the external exchange format for a hybrid's private columns.
void write_external_csv(const HybridDataset& hybrid, const std::filesystem::path& path);

/// Replaces private columns with draws from their masking distribution:
/// standard normal for (standardized) numerics, uniform codes for
/// categoricals. Used by the masked-feature baselines.
HybridDataset mask_gaussian(const Dataset& ds, std::uint64_t rng_seed);

}  // namespace featdp
