#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "featdp/impute.hpp"
#include "featdp/train.hpp"

namespace featdp {

/// FNV-1a (64-bit) content hash of a file, as lowercase hex.
std::string file_hash_hex(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string hash;
};

/// Stage record tying a command invocation to content-hashed inputs and
/// outputs. Timestamps and wall-clock live here and only here.
struct RunManifest {
  std::string stage;
  std::string command;
  std::string created_at;
  double wall_clock_sec = 0.0;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

/// Loads dir/manifest.json and checks that every referenced artifact exists
/// with a matching content hash; throws on any mismatch.
RunManifest verify_manifest(const std::filesystem::path& dir);

ManifestEntry manifest_entry(const std::filesystem::path& dir,
                             const std::string& relative_path);

// --- pipeline artifact directories ---------------------------------------

/// Data directory layout: schema.txt, scaler.txt, support.csv, train.csv,
/// val.csv, test.csv (plus vocab.txt after ingestion).
void save_split_set(const SplitSet& splits, const std::filesystem::path& dir);
SplitSet load_split_set(const std::filesystem::path& dir);

/// Hybrid directory layout: schema.txt, provenance.txt, hybrid_<split>.csv
/// and the exchange-format imputed_<split>.csv for each covered split.
void save_hybrid_split(const HybridDataset& hybrid, const std::string& split_name,
                       const std::filesystem::path& dir);
HybridSet load_hybrid_set(const std::filesystem::path& dir);

/// Deserialization wrapper: rebuilds a HybridDataset around an
/// already-imputed dataset read back from disk.
HybridDataset wrap_loaded_hybrid(Dataset data, std::string provenance);

}  // namespace featdp
