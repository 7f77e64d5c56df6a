#include "featdp/pipeline.hpp"

#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "featdp/error.hpp"
#include "featdp/version.hpp"

namespace featdp {

std::string file_hash_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw user_error("hash: cannot open " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
    if (got < static_cast<std::streamsize>(sizeof buf)) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

ManifestEntry manifest_entry(const std::filesystem::path& dir,
                             const std::string& relative_path) {
  return ManifestEntry{relative_path, file_hash_hex(dir / relative_path)};
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir) {
  nlohmann::json j;
  j["tool_version"] = FEATDP_VERSION;
  j["stage"] = manifest.stage;
  j["command"] = manifest.command;
  j["created_at"] = manifest.created_at;
  j["wall_clock_sec"] = manifest.wall_clock_sec;
  auto entries = [](const std::vector<ManifestEntry>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ManifestEntry& e : list)
      arr.push_back({{"path", e.path}, {"fnv64", e.hash}});
    return arr;
  };
  j["inputs"] = entries(manifest.inputs);
  j["outputs"] = entries(manifest.outputs);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw internal_error("manifest: cannot write in " + dir.string());
  out << j.dump(2) << "\n";
}

RunManifest verify_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in)
    throw user_error("manifest: " + (dir / "manifest.json").string() + " not found");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true);
  RunManifest m;
  m.stage = j.value("stage", "");
  m.command = j.value("command", "");
  m.created_at = j.value("created_at", "");
  m.wall_clock_sec = j.value("wall_clock_sec", 0.0);
  auto read_entries = [&](const char* key, std::vector<ManifestEntry>& list) {
    for (const auto& e : j.value(key, nlohmann::json::array()))
      list.push_back({e.at("path").get<std::string>(), e.at("fnv64").get<std::string>()});
  };
  read_entries("inputs", m.inputs);
  read_entries("outputs", m.outputs);
  for (const ManifestEntry& e : m.outputs) {
    std::filesystem::path p = dir / e.path;
    if (!std::filesystem::exists(p))
      throw user_error("manifest: missing artifact " + p.string());
    std::string actual = file_hash_hex(p);
    if (actual != e.hash)
      throw user_error("manifest: content hash mismatch for " + p.string() +
                       " (recorded " + e.hash + ", actual " + actual + ")");
  }
  return m;
}

namespace {

void save_vocab(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("vocab: cannot write " + path.string());
  out << "# categorical levels, in code order\n";
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (ds.schema().column(j).kind != ColumnKind::kCategorical) continue;
    out << ds.schema().column(j).name;
    if (j < ds.vocabulary().size())
      for (const std::string& level : ds.vocabulary()[j]) out << ',' << level;
    out << '\n';
  }
}

}  // namespace

void save_split_set(const SplitSet& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_schema(splits.train.schema(), dir / "schema.txt");
  save_scaler(splits.train, dir / "scaler.txt");
  save_dataset_csv(splits.support, dir / "support.csv");
  save_dataset_csv(splits.train, dir / "train.csv");
  save_dataset_csv(splits.val, dir / "val.csv");
  save_dataset_csv(splits.test, dir / "test.csv");
  if (!splits.train.vocabulary().empty()) save_vocab(splits.train, dir / "vocab.txt");
}

SplitSet load_split_set(const std::filesystem::path& dir) {
  FeatureSchema schema = load_schema(dir / "schema.txt");
  std::vector<ColumnStats> stats = load_scaler(schema, dir / "scaler.txt");
  auto load = [&](const char* name) {
    Dataset ds = read_dataset_csv(dir / name, schema);
    ds.set_standardization(stats);
    return ds;
  };
  return SplitSet{load("support.csv"), load("train.csv"), load("val.csv"),
                  load("test.csv")};
}

void save_hybrid_split(const HybridDataset& hybrid, const std::string& split_name,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_schema(hybrid.data().schema(), dir / "schema.txt");
  save_dataset_csv(hybrid.data(), dir / ("hybrid_" + split_name + ".csv"));
  write_external_csv(hybrid, dir / ("imputed_" + split_name + ".csv"));
  std::ofstream prov(dir / "provenance.txt", std::ios::binary);
  prov << hybrid.provenance() << "\n";
}

HybridDataset wrap_loaded_hybrid(Dataset data, std::string provenance) {
  std::vector<bool> mask(data.cols(), false);
  for (std::size_t j : data.schema().private_set()) mask[j] = true;
  return HybridDataset(std::move(data), std::move(mask), std::move(provenance));
}

HybridSet load_hybrid_set(const std::filesystem::path& dir) {
  FeatureSchema schema = load_schema(dir / "schema.txt");
  std::string provenance = "unknown";
  {
    std::ifstream prov(dir / "provenance.txt");
    if (prov) std::getline(prov, provenance);
  }
  auto load = [&](const char* name) {
    return wrap_loaded_hybrid(read_dataset_csv(dir / name, schema), provenance);
  };
  if (!std::filesystem::exists(dir / "hybrid_train.csv"))
    throw user_error("hybrid: " + dir.string() + " has no hybrid_train.csv");
  HybridSet set{load("hybrid_train.csv"), std::nullopt, std::nullopt};
  if (std::filesystem::exists(dir / "hybrid_val.csv")) set.val = load("hybrid_val.csv");
  if (std::filesystem::exists(dir / "hybrid_test.csv")) set.test = load("hybrid_test.csv");
  return set;
}

}  // namespace featdp
