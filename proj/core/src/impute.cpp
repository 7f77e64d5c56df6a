#include "featdp/impute.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "featdp/error.hpp"

namespace featdp {

namespace {

// Encodes only the public columns of a row (standardized numerics pass
// through, categoricals one-hot); used as the k-NN distance space.
std::size_t public_encoded_width(const FeatureSchema& schema) {
  std::size_t w = 0;
  for (std::size_t j : schema.public_set()) {
    const Column& c = schema.column(j);
    w += (c.kind == ColumnKind::kCategorical) ? static_cast<std::size_t>(c.cardinality) : 1;
  }
  return w;
}

void encode_public_row(const Dataset& ds, std::size_t row, std::span<double> out) {
  const FeatureSchema& schema = ds.schema();
  std::size_t k = 0;
  for (std::size_t j : schema.public_set()) {
    const Column& c = schema.column(j);
    double v = ds.cell(row, j);
    if (c.kind == ColumnKind::kNumeric) {
      out[k++] = v;
    } else {
      int code = static_cast<int>(std::llround(v));
      for (int cat = 0; cat < c.cardinality; ++cat) out[k++] = (cat == code) ? 1.0 : 0.0;
    }
  }
}

// Assembles a hybrid: public cells copied through the audited accessor,
// private cells taken from `private_values` (row-major over the private
// set). Source private cells are never read here.
HybridDataset assemble_hybrid(const Dataset& source,
                              const std::vector<double>& private_values,
                              std::string provenance) {
  const FeatureSchema& schema = source.schema();
  const std::size_t d = schema.column_count();
  const auto& priv = schema.private_set();
  std::vector<double> features(source.rows() * d, 0.0);
  for (std::size_t i = 0; i < source.rows(); ++i) {
    for (std::size_t j : schema.public_set()) features[i * d + j] = source.cell(i, j);
    for (std::size_t k = 0; k < priv.size(); ++k) {
      double v = private_values[i * priv.size() + k];
      if (!std::isfinite(v))
        throw user_error("impute: non-finite imputed value at row " + std::to_string(i));
      features[i * d + priv[k]] = v;
    }
  }
  Dataset data(schema, std::move(features), source.labels());
  data.set_standardization(source.standardization());
  data.set_vocabulary(source.vocabulary());
  std::vector<bool> mask(d, false);
  for (std::size_t j : priv) mask[j] = true;
  return HybridDataset(std::move(data), std::move(mask), std::move(provenance));
}

}  // namespace

HybridDataset::HybridDataset(Dataset data, std::vector<bool> imputed_mask,
                             std::string provenance)
    : data_(std::move(data)),
      imputed_mask_(std::move(imputed_mask)),
      provenance_(std::move(provenance)) {
  if (imputed_mask_.size() != data_.cols())
    throw internal_error("hybrid: mask size mismatch");
  for (std::size_t j = 0; j < data_.cols(); ++j)
    if (imputed_mask_[j] != data_.schema().is_private(j))
      throw internal_error("hybrid: imputed mask must equal the private set");
}

std::string imputer_kind_name(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::kMeanMode: return "mean_mode";
    case ImputerKind::kKnn: return "knn";
    case ImputerKind::kExternalFile: return "external";
    case ImputerKind::kIdentityTestOnly: return "identity_test_only";
  }
  return "?";
}

Imputer Imputer::mean_mode() {
  Imputer im;
  im.kind_ = ImputerKind::kMeanMode;
  return im;
}

Imputer Imputer::knn(int k) {
  if (k < 1) throw user_error("impute: knn needs k >= 1");
  Imputer im;
  im.kind_ = ImputerKind::kKnn;
  im.k_ = k;
  return im;
}

Imputer Imputer::external_file(std::filesystem::path path) {
  Imputer im;
  im.kind_ = ImputerKind::kExternalFile;
  im.external_path_ = std::move(path);
  return im;
}

Imputer Imputer::identity_test_only() {
  Imputer im;
  im.kind_ = ImputerKind::kIdentityTestOnly;
  return im;
}

std::string Imputer::describe() const {
  switch (kind_) {
    case ImputerKind::kKnn: return "knn(k=" + std::to_string(k_) + ")";
    case ImputerKind::kExternalFile: return "external(" + external_path_.string() + ")";
    default: return imputer_kind_name(kind_);
  }
}

void Imputer::fit(const Dataset& support) {
  if (support.rows() == 0) throw user_error("impute: support set is empty");
  const FeatureSchema& schema = support.schema();
  support_schema_ = schema;
  const auto& priv = schema.private_set();

  switch (kind_) {
    case ImputerKind::kMeanMode: {
      fill_values_.assign(priv.size(), 0.0);
      for (std::size_t k = 0; k < priv.size(); ++k) {
        const Column& col = schema.column(priv[k]);
        if (col.kind == ColumnKind::kNumeric) {
          double sum = 0.0;
          for (std::size_t i = 0; i < support.rows(); ++i) sum += support.cell(i, priv[k]);
          fill_values_[k] = sum / static_cast<double>(support.rows());
        } else {
          std::vector<std::size_t> counts(col.cardinality, 0);
          for (std::size_t i = 0; i < support.rows(); ++i)
            counts[static_cast<std::size_t>(std::llround(support.cell(i, priv[k])))]++;
          // Mode; tie broken by the lower code.
          fill_values_[k] = static_cast<double>(
              std::max_element(counts.begin(), counts.end()) - counts.begin());
        }
      }
      break;
    }
    case ImputerKind::kKnn: {
      const std::size_t w = public_encoded_width(schema);
      support_rows_ = support.rows();
      support_public_encoded_.assign(support_rows_ * w, 0.0);
      support_private_.assign(support_rows_ * priv.size(), 0.0);
      for (std::size_t i = 0; i < support_rows_; ++i) {
        encode_public_row(support, i,
                          std::span<double>(support_public_encoded_.data() + i * w, w));
        for (std::size_t k = 0; k < priv.size(); ++k)
          support_private_[i * priv.size() + k] = support.cell(i, priv[k]);
      }
      break;
    }
    case ImputerKind::kExternalFile:
    case ImputerKind::kIdentityTestOnly:
      break;  // nothing to learn
  }
  fitted_ = true;
}

HybridDataset Imputer::impute(const Dataset& ds) const {
  if (!fitted_) throw user_error("impute: imputer is not fitted");
  if (!(ds.schema() == support_schema_))
    throw user_error("impute: dataset schema does not match the fitted support");
  const FeatureSchema& schema = ds.schema();
  const auto& priv = schema.private_set();
  const std::size_t n = ds.rows();

  switch (kind_) {
    case ImputerKind::kMeanMode: {
      std::vector<double> values(n * priv.size());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < priv.size(); ++k)
          values[i * priv.size() + k] = fill_values_[k];
      return assemble_hybrid(ds, values, describe());
    }
    case ImputerKind::kKnn: {
      const std::size_t w = public_encoded_width(schema);
      const std::size_t k_eff = std::min<std::size_t>(k_, support_rows_);
      std::vector<double> values(n * priv.size());
      std::vector<double> query(w);
      std::vector<std::pair<double, std::size_t>> dist(support_rows_);
      for (std::size_t i = 0; i < n; ++i) {
        encode_public_row(ds, i, query);
        for (std::size_t s = 0; s < support_rows_; ++s) {
          const double* srow = support_public_encoded_.data() + s * w;
          double acc = 0.0;
          for (std::size_t m = 0; m < w; ++m) {
            double diff = query[m] - srow[m];
            acc += diff * diff;
          }
          dist[s] = {acc, s};  // ties broken by lower support index
        }
        std::partial_sort(dist.begin(), dist.begin() + k_eff, dist.end());
        for (std::size_t kk = 0; kk < priv.size(); ++kk) {
          const Column& col = schema.column(priv[kk]);
          if (col.kind == ColumnKind::kNumeric) {
            double sum = 0.0;
            for (std::size_t m = 0; m < k_eff; ++m)
              sum += support_private_[dist[m].second * priv.size() + kk];
            values[i * priv.size() + kk] = sum / static_cast<double>(k_eff);
          } else {
            std::vector<std::size_t> counts(col.cardinality, 0);
            for (std::size_t m = 0; m < k_eff; ++m)
              counts[static_cast<std::size_t>(std::llround(
                  support_private_[dist[m].second * priv.size() + kk]))]++;
            values[i * priv.size() + kk] = static_cast<double>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
          }
        }
      }
      return assemble_hybrid(ds, values, describe());
    }
    case ImputerKind::kExternalFile:
      return load_external_hybrid(ds, external_path_);
    case ImputerKind::kIdentityTestOnly: {
      // Reads true private values on purpose; training commands refuse it.
      std::vector<double> values(n * priv.size());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < priv.size(); ++k)
          values[i * priv.size() + k] = ds.cell(i, priv[k]);
      return assemble_hybrid(ds, values, describe());
    }
  }
  throw internal_error("impute: unreachable");
}

HybridDataset load_external_hybrid(const Dataset& ds, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("external hybrid: cannot open " + path.string());
  const FeatureSchema& schema = ds.schema();
  const auto& priv = schema.private_set();

  std::string line;
  if (!std::getline(in, line)) throw user_error("external hybrid: empty file");
  {
    std::istringstream header(line);
    std::string field;
    std::vector<std::string> names;
    while (std::getline(header, field, ',')) {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      names.push_back(field);
    }
    if (names.size() != priv.size() + 1 || names[0] != "id")
      throw user_error("external hybrid: header must be id,<private columns>");
    for (std::size_t k = 0; k < priv.size(); ++k)
      if (names[k + 1] != schema.column(priv[k]).name)
        throw user_error("external hybrid: column '" + names[k + 1] +
                         "' does not match private column '" +
                         schema.column(priv[k]).name + "'");
  }

  std::vector<double> values(ds.rows() * priv.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= ds.rows())
      throw user_error("external hybrid: more rows than the target dataset");
    std::istringstream fields(line);
    std::string field;
    std::getline(fields, field, ',');
    long id = std::strtol(field.c_str(), nullptr, 10);
    if (id != static_cast<long>(row))
      throw user_error("external hybrid: id mismatch at row " + std::to_string(row) +
                       " (got " + field + ")");
    for (std::size_t k = 0; k < priv.size(); ++k) {
      if (!std::getline(fields, field, ','))
        throw user_error("external hybrid: missing value at row " + std::to_string(row));
      double v = 0.0;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || p != field.data() + field.size() || !std::isfinite(v))
        throw user_error("external hybrid: bad value '" + field + "' at row " +
                         std::to_string(row));
      const Column& col = schema.column(priv[k]);
      if (col.kind == ColumnKind::kCategorical) {
        long code = std::llround(v);
        if (code < 0 || code >= col.cardinality)
          throw user_error("external hybrid: code " + std::to_string(code) +
                           " out of range for '" + col.name + "'");
      }
      values[row * priv.size() + k] = v;
    }
    ++row;
  }
  if (row != ds.rows())
    throw user_error("external hybrid: file has " + std::to_string(row) +
                     " rows, target has " + std::to_string(ds.rows()));
  return assemble_hybrid(ds, values, "external(" + path.filename().string() + ")");
}

void write_external_csv(const HybridDataset& hybrid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("external hybrid: cannot write " + path.string());
  const FeatureSchema& schema = hybrid.data().schema();
  out << "id";
  for (std::size_t j : schema.private_set()) out << ',' << schema.column(j).name;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < hybrid.data().rows(); ++i) {
    out << i;
    for (std::size_t j : schema.private_set()) {
      std::snprintf(buf, sizeof buf, "%.17g", hybrid.data().storage()[i * schema.column_count() + j]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

HybridDataset mask_gaussian(const Dataset& ds, std::uint64_t rng_seed) {
  const FeatureSchema& schema = ds.schema();
  const auto& priv = schema.private_set();
  RngStream stream(rng_seed, StreamPurpose::kMask);
  std::vector<double> values(ds.rows() * priv.size());
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t k = 0; k < priv.size(); ++k) {
      const Column& col = schema.column(priv[k]);
      values[i * priv.size() + k] =
          (col.kind == ColumnKind::kNumeric)
              ? stream.next_gaussian()
              : static_cast<double>(stream.next_below(col.cardinality));
    }
  return assemble_hybrid(ds, values, "mask_gaussian");
}

}  // namespace featdp
