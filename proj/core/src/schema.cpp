#include "featdp/schema.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "featdp/error.hpp"

namespace featdp {

FeatureSchema::FeatureSchema(std::vector<Column> columns, std::string label_column)
    : columns_(std::move(columns)), label_column_(std::move(label_column)) {
  if (columns_.empty()) throw user_error("schema: needs at least one column");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const Column& c = columns_[j];
    if (c.name.empty()) throw user_error("schema: empty column name");
    if (!seen.insert(c.name).second)
      throw user_error("schema: duplicate column name '" + c.name + "'");
    if (c.kind == ColumnKind::kCategorical && c.cardinality < 2)
      throw user_error("schema: categorical column '" + c.name +
                       "' needs cardinality >= 2");
    if (c.is_private)
      private_set_.push_back(j);
    else
      public_set_.push_back(j);
  }
  if (seen.count(label_column_))
    throw user_error("schema: label column '" + label_column_ +
                     "' collides with a feature column");
}

std::size_t FeatureSchema::encoded_width() const {
  std::size_t w = 0;
  for (const Column& c : columns_)
    w += (c.kind == ColumnKind::kCategorical) ? static_cast<std::size_t>(c.cardinality) : 1;
  return w;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < columns_.size(); ++j)
    if (columns_[j].name == name) return j;
  throw user_error("schema: no column named '" + name + "'");
}

bool FeatureSchema::has_column(const std::string& name) const {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.name == name; });
}

FeatureSchema FeatureSchema::without_columns(const std::vector<std::size_t>& drop) const {
  std::set<std::size_t> dropped(drop.begin(), drop.end());
  std::vector<Column> kept;
  for (std::size_t j = 0; j < columns_.size(); ++j)
    if (!dropped.count(j)) kept.push_back(columns_[j]);
  return FeatureSchema(std::move(kept), label_column_);
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  if (label_column_ != other.label_column_) return false;
  if (columns_.size() != other.columns_.size()) return false;
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const Column& a = columns_[j];
    const Column& b = other.columns_[j];
    if (a.name != b.name || a.kind != b.kind || a.is_private != b.is_private)
      return false;
    if (a.kind == ColumnKind::kCategorical && a.cardinality != b.cardinality)
      return false;
  }
  return true;
}

FeatureSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("schema: cannot open " + path.string());
  std::vector<Column> columns;
  std::string label = "label";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string keyword;
    row >> keyword;
    if (keyword == "label") {
      row >> label;
    } else if (keyword == "column") {
      Column c;
      std::string kind, privacy;
      row >> c.name >> kind >> privacy;
      if (c.name.empty() || kind.empty() || privacy.empty())
        throw user_error("schema: malformed line " + std::to_string(lineno) +
                         " in " + path.string());
      if (kind == "numeric") {
        c.kind = ColumnKind::kNumeric;
      } else if (kind.rfind("categorical:", 0) == 0) {
        c.kind = ColumnKind::kCategorical;
        c.cardinality = std::stoi(kind.substr(12));
      } else {
        throw user_error("schema: unknown kind '" + kind + "' at line " +
                         std::to_string(lineno));
      }
      if (privacy == "private")
        c.is_private = true;
      else if (privacy == "public")
        c.is_private = false;
      else
        throw user_error("schema: privacy flag must be public|private at line " +
                         std::to_string(lineno));
      columns.push_back(std::move(c));
    } else {
      throw user_error("schema: unknown keyword '" + keyword + "' at line " +
                       std::to_string(lineno));
    }
  }
  return FeatureSchema(std::move(columns), label);
}

void save_schema(const FeatureSchema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw internal_error("schema: cannot write " + path.string());
  out << "# featdp feature schema\n";
  out << "label " << schema.label_column() << "\n";
  for (const Column& c : schema.columns()) {
    out << "column " << c.name << ' ';
    if (c.kind == ColumnKind::kNumeric)
      out << "numeric";
    else
      out << "categorical:" << c.cardinality;
    out << ' ' << (c.is_private ? "private" : "public") << "\n";
  }
}

void SplitSpec::validate() const {
  const double fracs[] = {support_frac, train_frac, val_frac, test_frac};
  double sum = 0.0;
  for (double f : fracs) {
    if (f <= 0.0) throw user_error("split: every fraction must be > 0");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw user_error("split: fractions must sum to 1");
}

}  // namespace featdp
