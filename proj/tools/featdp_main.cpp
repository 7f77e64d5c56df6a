// featdp: feature-level differentially private training on tabular data.
//
// Pipeline: synth/ingest -> impute -> calibrate -> train/sweep -> eval ->
// compare. Every stage writes a manifest.json with content hashes of its
// outputs; downstream stages verify the manifests of their inputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "featdp/dataset.hpp"
#include "featdp/error.hpp"
#include "featdp/impute.hpp"
#include "featdp/metrics.hpp"
#include "featdp/model.hpp"
#include "featdp/pipeline.hpp"
#include "featdp/privacy.hpp"
#include "featdp/sweep.hpp"
#include "featdp/train.hpp"
#include "featdp/version.hpp"

namespace fs = std::filesystem;
using namespace featdp;

namespace {

std::string iso_timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_double_arg(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw user_error(std::string(what) + ": cannot parse number '" + text + "'");
  }
}

std::uint64_t parse_seed_arg(const std::string& text) {
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw user_error("seeds: cannot parse '" + text + "'");
  }
}

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

void emit_manifest(const fs::path& dir, const std::string& stage,
                   const std::string& command, const StageTimer& timer,
                   const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs,
                   const fs::path& input_base = {}) {
  RunManifest m;
  m.stage = stage;
  m.command = command;
  m.created_at = iso_timestamp();
  m.wall_clock_sec = timer.seconds();
  for (const std::string& rel : inputs)
    m.inputs.push_back(ManifestEntry{
        rel, file_hash_hex(input_base.empty() ? fs::path(rel) : input_base / rel)});
  for (const std::string& rel : outputs) m.outputs.push_back(manifest_entry(dir, rel));
  write_manifest(m, dir);
}

// ----------------------------------------------------------------------
// synth / ingest

struct PipelineArgs {
  SplitSpec spec;
  std::uint64_t seed = 1;
  std::string out_dir;
};

void finish_dataset_dir(Dataset prepared, const PipelineArgs& args,
                        const std::string& stage, const std::string& command,
                        const StageTimer& timer,
                        const std::vector<std::string>& input_files) {
  SplitResult parts = split(prepared, args.spec, args.seed);
  std::vector<ColumnStats> stats = standardize_fit(parts.train);
  standardize_apply(parts.support, stats);
  standardize_apply(parts.train, stats);
  standardize_apply(parts.val, stats);
  standardize_apply(parts.test, stats);
  SplitSet splits{std::move(parts.support), std::move(parts.train),
                  std::move(parts.val), std::move(parts.test)};
  fs::path dir(args.out_dir);
  save_split_set(splits, dir);
  std::vector<std::string> outputs{"schema.txt", "scaler.txt", "support.csv",
                                   "train.csv", "val.csv", "test.csv"};
  if (fs::exists(dir / "vocab.txt")) outputs.push_back("vocab.txt");
  emit_manifest(dir, stage, command, timer, input_files, outputs);

  double prevalence = 0.0;
  for (int y : splits.train.labels()) prevalence += y;
  prevalence /= static_cast<double>(splits.train.rows());
  std::printf("wrote %s: support=%zu train=%zu val=%zu test=%zu train-prevalence=%.4f\n",
              args.out_dir.c_str(), splits.support.rows(), splits.train.rows(),
              splits.val.rows(), splits.test.rows(), prevalence);
}

// Collapse repeated rows per id to the last non-missing value per column.
void collapse_last_value(const fs::path& in_path, const std::string& id_column,
                         const fs::path& out_path) {
  std::ifstream in(in_path);
  if (!in) throw user_error("ingest: cannot open " + in_path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("ingest: empty csv");
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string f;
    while (std::getline(h, f, ',')) {
      if (!f.empty() && f.back() == '\r') f.pop_back();
      header.push_back(f);
    }
  }
  std::size_t id_pos = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == id_column) id_pos = i;
  if (id_pos == header.size())
    throw user_error("ingest: id column '" + id_column + "' not in header");

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::string>> latest;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream r(line);
    std::string f;
    while (std::getline(r, f, ',')) fields.push_back(f);
    fields.resize(header.size());
    const std::string& id = fields[id_pos];
    auto it = latest.find(id);
    if (it == latest.end()) {
      order.push_back(id);
      latest[id] = fields;
    } else {
      for (std::size_t j = 0; j < header.size(); ++j)
        if (!fields[j].empty()) it->second[j] = fields[j];
    }
  }
  std::ofstream out(out_path, std::ios::binary);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << header[j] << (j + 1 < header.size() ? ',' : '\n');
  for (const std::string& id : order) {
    const auto& row = latest[id];
    for (std::size_t j = 0; j < row.size(); ++j)
      out << row[j] << (j + 1 < row.size() ? ',' : '\n');
  }
}

// ----------------------------------------------------------------------
// train helpers

struct DataInputs {
  SplitSet splits;
  std::optional<HybridSet> hybrid;
};

DataInputs load_inputs(const std::string& data_dir, const std::string& hybrid_dir,
                       bool need_hybrid) {
  verify_manifest(data_dir);
  DataInputs in{load_split_set(data_dir), std::nullopt};
  if (!hybrid_dir.empty()) {
    verify_manifest(hybrid_dir);
    in.hybrid = load_hybrid_set(hybrid_dir);
    if (in.hybrid->train.provenance().rfind("identity_test_only", 0) == 0)
      throw user_error("train: identity_test_only hybrids are test fixtures and "
                       "cannot be used for training");
  } else if (need_hybrid) {
    throw user_error("train: this method needs --hybrid-dir");
  }
  return in;
}

void write_run_outputs(const RunResult& result, const fs::path& dir,
                       const std::string& command, const StageTimer& timer,
                       const std::vector<std::string>& inputs) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "result.json", std::ios::binary);
    out << run_result_to_json(result);
  }
  save_train_config(result.config, dir / "run_config.txt");
  if (result.best_model) save_model(*result.best_model, dir / "model.ckpt");
  std::vector<std::string> outputs{"result.json", "run_config.txt"};
  if (result.best_model) outputs.push_back("model.ckpt");
  emit_manifest(dir, "train", command, timer, inputs, outputs);
}

// ----------------------------------------------------------------------
// compare

struct CompareKey {
  std::string method;
  double epsilon;
  std::uint64_t seed;
  bool operator<(const CompareKey& o) const {
    if (method != o.method) return method < o.method;
    if (epsilon != o.epsilon) return epsilon < o.epsilon;
    return seed < o.seed;
  }
};

double metric_of(const SweepCsvRow& row, const std::string& metric) {
  if (metric == "test_auprc") return row.test_auprc;
  if (metric == "test_auroc") return row.test_auroc;
  if (metric == "val_auprc") return row.val_auprc;
  throw user_error("compare: unknown metric '" + metric + "'");
}

// Best row per key by validation AUPRC (sweeps may carry multiple grid cells).
std::map<CompareKey, SweepCsvRow> select_rows(const std::vector<SweepCsvRow>& rows) {
  std::map<CompareKey, SweepCsvRow> best;
  for (const SweepCsvRow& row : rows) {
    CompareKey key{row.method, row.epsilon, row.seed};
    auto it = best.find(key);
    if (it == best.end() || row.val_auprc > it->second.val_auprc) best[key] = row;
  }
  return best;
}

int cmd_compare(const std::vector<std::string>& sweep_paths, const std::string& metric,
                const std::string& out_dir, const std::string& command) {
  StageTimer timer;
  if (sweep_paths.size() < 2)
    throw user_error("compare: need at least two sweep CSVs");
  std::vector<std::map<CompareKey, SweepCsvRow>> sweeps;
  for (const std::string& path : sweep_paths)
    sweeps.push_back(select_rows(read_sweep_csv(path)));

  // Shared (method, epsilon, seed) keys are a precondition.
  for (std::size_t s = 1; s < sweeps.size(); ++s) {
    if (sweeps[s].size() != sweeps[0].size())
      throw user_error("compare: sweeps do not share (method, epsilon, seed) keys");
    for (const auto& [key, row] : sweeps[0])
      if (!sweeps[s].count(key))
        throw user_error("compare: sweep " + sweep_paths[s] + " is missing key (" +
                         key.method + ", " + format_epsilon(key.epsilon) + ", " +
                         std::to_string(key.seed) + ")");
  }

  std::set<std::string> methods;
  std::set<double> epsilons;
  for (const auto& [key, row] : sweeps[0]) {
    methods.insert(key.method);
    epsilons.insert(key.epsilon);
  }

  fs::create_directories(out_dir);
  fs::path dir(out_dir);

  // Per-epsilon mean/stddev table pooled over sweeps and seeds.
  std::printf("metric: %s\n", metric.c_str());
  std::printf("%-18s %10s %10s %10s %6s\n", "method", "epsilon", "mean", "stddev", "n");
  {
    std::ofstream plot(dir / "plot_data.csv", std::ios::binary);
    plot << "epsilon,method,mean_" << metric << ",stddev\n";
    for (double eps : epsilons) {
      for (const std::string& method : methods) {
        std::vector<double> values;
        for (const auto& sweep : sweeps)
          for (const auto& [key, row] : sweep)
            if (key.method == method && key.epsilon == eps)
              values.push_back(metric_of(row, metric));
        if (values.empty()) continue;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        double stddev = std::sqrt(ss / static_cast<double>(values.size()));
        std::printf("%-18s %10s %10.4f %10.4f %6zu\n", method.c_str(),
                    format_epsilon(eps).c_str(), mean, stddev, values.size());
        char mb[32], sb[32];
        std::snprintf(mb, sizeof mb, "%.6f", mean);
        std::snprintf(sb, sizeof sb, "%.6f", stddev);
        plot << format_epsilon(eps) << ',' << method << ',' << mb << ',' << sb << '\n';
      }
    }
  }

  // Wilcoxon tests. Family 1: sweep i vs sweep j per method, paired over
  // (epsilon, seed). Family 2: method A vs method B pooled over every
  // (sweep, epsilon, seed) triple. Identical cross-sweep pairs everywhere
  // mean there is nothing to compare, which is an input error.
  std::size_t cross_sweep_informative = 0;
  std::size_t cross_sweep_total = 0;
  std::ofstream wout(dir / "wilcoxon.csv", std::ios::binary);
  wout << "kind,a,b,method,pairs,p_value\n";
  auto run_test = [&](const std::string& kind, const std::string& a,
                      const std::string& b, const std::string& method,
                      const std::vector<double>& va, const std::vector<double>& vb) {
    if (kind == "sweeps") ++cross_sweep_total;
    std::string p_text;
    try {
      double p = wilcoxon_signed_rank_greater(va, vb);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", p);
      p_text = buf;
      if (kind == "sweeps") ++cross_sweep_informative;
    } catch (const Error& e) {
      p_text = std::string(e.what()).find("all differences") != std::string::npos
                   ? "identical"
                   : "n/a";
    }
    wout << kind << ',' << a << ',' << b << ',' << method << ',' << va.size() << ','
         << p_text << '\n';
    std::printf("wilcoxon[%s] %s > %s (%s, %zu pairs): p = %s\n", kind.c_str(),
                a.c_str(), b.c_str(), method.empty() ? "-" : method.c_str(),
                va.size(), p_text.c_str());
  };

  for (std::size_t i = 0; i < sweeps.size(); ++i)
    for (std::size_t j = 0; j < sweeps.size(); ++j) {
      if (i == j) continue;
      for (const std::string& method : methods) {
        std::vector<double> va, vb;
        for (const auto& [key, row] : sweeps[i]) {
          if (key.method != method) continue;
          va.push_back(metric_of(row, metric));
          vb.push_back(metric_of(sweeps[j].at(key), metric));
        }
        if (va.size() >= 5)
          run_test("sweeps", sweep_paths[i], sweep_paths[j], method, va, vb);
      }
    }
  for (const std::string& a : methods)
    for (const std::string& b : methods) {
      if (a == b) continue;
      std::vector<double> va, vb;
      for (std::size_t s = 0; s < sweeps.size(); ++s)
        for (const auto& [key, row] : sweeps[s]) {
          if (key.method != a) continue;
          CompareKey other{b, key.epsilon, key.seed};
          auto it = sweeps[s].find(other);
          if (it == sweeps[s].end()) continue;
          va.push_back(metric_of(row, metric));
          vb.push_back(metric_of(it->second, metric));
        }
      if (va.size() >= 5) run_test("methods", a, b, "", va, vb);
    }

  std::vector<std::string> inputs;
  for (const std::string& p : sweep_paths) inputs.push_back(p);
  emit_manifest(dir, "compare", command, timer, inputs,
                {"plot_data.csv", "wilcoxon.csv"});
  if (cross_sweep_total > 0 && cross_sweep_informative == 0)
    throw user_error("compare: the sweeps are identical pair for pair "
                     "(no nonzero differences to test)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-level differentially private training on tabular data"};
  app.set_version_flag("--version", FEATDP_VERSION);
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate standardized synthetic splits");
  struct {
    std::size_t n = 20000;
    double coupling = 0.8;
    std::uint64_t seed = 1;
    std::string out_dir = "data";
    std::string schema_file;
    SplitSpec spec;
  } synth_args;
  synth->add_option("--n", synth_args.n, "rows to generate");
  synth->add_option("--coupling", synth_args.coupling,
                    "dependence of private on public features, 0..1");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--out-dir", synth_args.out_dir, "output directory");
  synth->add_option("--schema", synth_args.schema_file,
                    "schema file (default: built-in clinical-style schema)");
  synth->add_option("--support-frac", synth_args.spec.support_frac);
  synth->add_option("--train-frac", synth_args.spec.train_frac);
  synth->add_option("--val-frac", synth_args.spec.val_frac);
  synth->add_option("--test-frac", synth_args.spec.test_frac);
  synth->callback([&] {
    StageTimer timer;
    FeatureSchema schema = synth_args.schema_file.empty()
                               ? default_synthetic_schema()
                               : load_schema(synth_args.schema_file);
    Dataset ds =
        generate_synthetic(synth_args.n, schema, synth_args.coupling, synth_args.seed);
    PipelineArgs pipeline{synth_args.spec, synth_args.seed, synth_args.out_dir};
    finish_dataset_dir(std::move(ds), pipeline, "synth", command_line, timer, {});
  });

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "load, preprocess, and split a CSV");
  struct {
    std::string csv;
    std::string schema_file;
    std::string out_dir = "data";
    std::string collapse_by;
    double missing_threshold = 0.70;
    double prevalence = 0.15;
    std::uint64_t seed = 1;
    SplitSpec spec;
  } ingest_args;
  ingest->add_option("--csv", ingest_args.csv, "input CSV")->required();
  ingest->add_option("--schema", ingest_args.schema_file, "schema file")->required();
  ingest->add_option("--out-dir", ingest_args.out_dir, "output directory");
  ingest->add_option("--collapse-by", ingest_args.collapse_by,
                     "collapse repeated rows per this id column, keeping the "
                     "last non-missing value per feature");
  ingest->add_option("--missing-threshold", ingest_args.missing_threshold,
                     "drop columns missing more than this fraction");
  ingest->add_option("--prevalence", ingest_args.prevalence,
                     "downsample negatives to this positive prevalence");
  ingest->add_option("--seed", ingest_args.seed);
  ingest->add_option("--support-frac", ingest_args.spec.support_frac);
  ingest->add_option("--train-frac", ingest_args.spec.train_frac);
  ingest->add_option("--val-frac", ingest_args.spec.val_frac);
  ingest->add_option("--test-frac", ingest_args.spec.test_frac);
  ingest->callback([&] {
    StageTimer timer;
    FeatureSchema schema = load_schema(ingest_args.schema_file);
    fs::path csv_path(ingest_args.csv);
    fs::path source = csv_path;
    if (!ingest_args.collapse_by.empty()) {
      fs::create_directories(ingest_args.out_dir);
      source = fs::path(ingest_args.out_dir) / "collapsed.csv";
      collapse_last_value(csv_path, ingest_args.collapse_by, source);
    }
    Dataset raw = load_csv(source, schema);
    Dataset prepared = preprocess(
        raw, {ingest_args.missing_threshold, ingest_args.prevalence}, ingest_args.seed);
    PipelineArgs pipeline{ingest_args.spec, ingest_args.seed, ingest_args.out_dir};
    finish_dataset_dir(std::move(prepared), pipeline, "ingest", command_line, timer,
                       {ingest_args.csv, ingest_args.schema_file});
  });

  // ---- impute ----
  auto* impute_cmd = app.add_subcommand("impute", "build hybrid datasets");
  struct {
    std::string data_dir = "data";
    std::string out_dir = "hybrid";
    std::string kind = "knn";
    int k = 5;
    std::vector<std::string> files;
    std::string splits_csv = "train,val,test";
    bool allow_test_imputer = false;
  } impute_args;
  impute_cmd->add_option("--data-dir", impute_args.data_dir);
  impute_cmd->add_option("--out-dir", impute_args.out_dir);
  impute_cmd->add_option("--kind", impute_args.kind,
                         "mean_mode | knn | external | identity_test_only");
  impute_cmd->add_option("--k", impute_args.k, "neighbors for knn");
  impute_cmd->add_option("--file", impute_args.files,
                         "external hybrid CSV, one per target split");
  impute_cmd->add_option("--splits", impute_args.splits_csv,
                         "comma-separated target splits");
  impute_cmd->add_flag("--allow-test-imputer", impute_args.allow_test_imputer,
                       "permit the identity imputer (test fixture only)");
  impute_cmd->callback([&] {
    StageTimer timer;
    verify_manifest(impute_args.data_dir);
    SplitSet splits = load_split_set(impute_args.data_dir);
    std::vector<std::string> targets = split_list(impute_args.splits_csv);
    if (impute_args.kind == "external" && impute_args.files.size() == 1 &&
        impute_args.splits_csv == "train,val,test")
      targets = {"train"};

    auto dataset_of = [&](const std::string& name) -> const Dataset& {
      if (name == "train") return splits.train;
      if (name == "val") return splits.val;
      if (name == "test") return splits.test;
      throw user_error("impute: unknown split '" + name + "'");
    };

    fs::path dir(impute_args.out_dir);
    std::vector<std::string> outputs{"schema.txt", "provenance.txt"};
    auto emit = [&](const HybridDataset& hybrid, const std::string& name) {
      save_hybrid_split(hybrid, name, dir);
      outputs.push_back("hybrid_" + name + ".csv");
      outputs.push_back("imputed_" + name + ".csv");
    };

    if (impute_args.kind == "external") {
      if (impute_args.files.size() != targets.size())
        throw user_error("impute: got " + std::to_string(impute_args.files.size()) +
                         " --file arguments for " + std::to_string(targets.size()) +
                         " splits");
      for (std::size_t i = 0; i < targets.size(); ++i)
        emit(load_external_hybrid(dataset_of(targets[i]), impute_args.files[i]),
             targets[i]);
    } else {
      Imputer imputer = [&] {
        if (impute_args.kind == "mean_mode") return Imputer::mean_mode();
        if (impute_args.kind == "knn") return Imputer::knn(impute_args.k);
        if (impute_args.kind == "identity_test_only") {
          if (!impute_args.allow_test_imputer)
            throw user_error("impute: identity_test_only leaks private values and "
                             "requires --allow-test-imputer");
          return Imputer::identity_test_only();
        }
        throw user_error("impute: unknown kind '" + impute_args.kind + "'");
      }();
      imputer.fit(splits.support);
      for (const std::string& name : targets)
        emit(imputer.impute(dataset_of(name)), name);
    }
    std::vector<std::string> inputs{"schema.txt", "support.csv"};
    emit_manifest(dir, "impute", command_line, timer, inputs, outputs,
                  impute_args.data_dir);
    std::printf("wrote %s (%zu splits)\n", impute_args.out_dir.c_str(), targets.size());
  });

  // ---- calibrate ----
  auto* calibrate = app.add_subcommand("calibrate", "solve for the noise multiplier");
  struct {
    double epsilon = 1.0;
    double delta = 1e-5;
    double sample_rate = 0.0;
    std::int64_t steps = 0;
    bool closed_form = false;
    double tau = 1.0;
    double m = 0.0;
    double n = 0.0;
    double c = 1.0;
    std::string out;
  } cal_args;
  calibrate->add_option("--epsilon", cal_args.epsilon)->required();
  calibrate->add_option("--delta", cal_args.delta)->required();
  calibrate->add_option("--sample-rate", cal_args.sample_rate, "Poisson rate p");
  calibrate->add_option("--steps", cal_args.steps, "composition length T")->required();
  calibrate->add_flag("--closed-form", cal_args.closed_form,
                      "use sigma = c tau m/(eps n) sqrt(T ln(1/delta) ln(T/delta))");
  calibrate->add_option("--tau", cal_args.tau, "sensitivity bound (closed form)");
  calibrate->add_option("--m", cal_args.m, "private batch size (closed form)");
  calibrate->add_option("--n", cal_args.n, "dataset size (closed form)");
  calibrate->add_option("--c", cal_args.c, "absolute constant (closed form)");
  calibrate->add_option("--out", cal_args.out, "write a run config with this sigma");
  calibrate->callback([&] {
    double sigma;
    if (cal_args.closed_form) {
      if (cal_args.m <= 0.0 || cal_args.n <= 0.0)
        throw user_error("calibrate: closed form needs --m and --n");
      sigma = calibrate_sigma_closed_form(cal_args.epsilon, cal_args.delta,
                                          cal_args.tau, cal_args.m, cal_args.n,
                                          cal_args.steps, cal_args.c);
    } else {
      if (cal_args.sample_rate <= 0.0)
        throw user_error("calibrate: accountant calibration needs --sample-rate");
      sigma = calibrate_sigma_accountant(cal_args.epsilon, cal_args.delta,
                                         cal_args.sample_rate, cal_args.steps);
    }
    std::printf("sigma %.6f\n", sigma);
    if (!cal_args.out.empty()) {
      TrainConfig cfg;
      cfg.epsilon = cal_args.epsilon;
      cfg.delta = cal_args.delta;
      cfg.sigma = sigma;
      cfg.sample_rate = cal_args.sample_rate;
      save_train_config(cfg, cal_args.out);
      std::printf("wrote %s\n", cal_args.out.c_str());
    }
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "run one training configuration");
  struct {
    std::string data_dir = "data";
    std::string hybrid_dir;
    std::string out_dir = "run";
    std::string config_file;
    std::string method = "fusiondp";
    double epsilon = 0.0, delta = 0.0, sigma = -1.0;
    int epochs = -1;
    double clip = -1.0, alpha = -1.0, beta = -1.0, lambda = -1.0, lr = -1.0;
    double sample_rate = -1.0;
    int public_batch = -1;
    std::uint64_t seed = 0;
    bool seed_set = false, method_set = false;
  } train_args;
  train_cmd->add_option("--data-dir", train_args.data_dir);
  train_cmd->add_option("--hybrid-dir", train_args.hybrid_dir);
  train_cmd->add_option("--out-dir", train_args.out_dir);
  train_cmd->add_option("--config", train_args.config_file, "run config file");
  train_cmd->add_option("--method", train_args.method)
      ->each([&](const std::string&) { train_args.method_set = true; });
  train_cmd->add_option("--epsilon", train_args.epsilon);
  train_cmd->add_option("--delta", train_args.delta);
  train_cmd->add_option("--sigma", train_args.sigma);
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--clip", train_args.clip, "clip norm C");
  train_cmd->add_option("--alpha", train_args.alpha);
  train_cmd->add_option("--beta", train_args.beta);
  train_cmd->add_option("--lambda", train_args.lambda);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--sample-rate", train_args.sample_rate);
  train_cmd->add_option("--public-batch", train_args.public_batch);
  train_cmd->add_option("--seed", train_args.seed)
      ->each([&](const std::string&) { train_args.seed_set = true; });
  train_cmd->callback([&] {
    StageTimer timer;
    TrainConfig cfg;
    if (!train_args.config_file.empty()) cfg = load_train_config(train_args.config_file);
    if (train_args.method_set || train_args.config_file.empty())
      cfg.method = method_from_name(train_args.method);
    if (train_args.epsilon > 0.0) cfg.epsilon = train_args.epsilon;
    if (train_args.delta > 0.0) cfg.delta = train_args.delta;
    if (train_args.sigma >= 0.0) cfg.sigma = train_args.sigma;
    if (train_args.epochs >= 0) cfg.epochs = train_args.epochs;
    if (train_args.clip > 0.0) cfg.clip_norm = train_args.clip;
    if (train_args.alpha >= 0.0) cfg.alpha = train_args.alpha;
    if (train_args.beta >= 0.0) cfg.beta = train_args.beta;
    if (train_args.lambda >= 0.0) cfg.lambda = train_args.lambda;
    if (train_args.lr > 0.0) cfg.lr = train_args.lr;
    if (train_args.sample_rate > 0.0) cfg.sample_rate = train_args.sample_rate;
    if (train_args.public_batch > 0) cfg.public_batch = train_args.public_batch;
    if (train_args.seed_set) cfg.run_seed = train_args.seed;

    DataInputs inputs =
        load_inputs(train_args.data_dir, train_args.hybrid_dir, cfg.uses_hybrid());
    RunResult result =
        featdp::train(inputs.splits, inputs.hybrid ? &*inputs.hybrid : nullptr, cfg);
    write_run_outputs(result, train_args.out_dir, command_line, timer,
                      {train_args.data_dir + "/manifest.json"});
    std::printf("%s: val_auprc=%.4f test_auprc=%.4f test_auroc=%.4f epsilon=%s\n",
                method_name(cfg.method).c_str(), result.val_auprc_best,
                result.test_auprc, result.test_auroc,
                format_epsilon(result.achieved_epsilon).c_str());
  });

  // ---- sweep ----
  auto* sweep_cmd = app.add_subcommand("sweep", "grid search over configurations");
  struct {
    std::string data_dir = "data";
    std::string hybrid_dir;
    std::string out_dir = "sweep";
    std::string grid_file;
    std::string methods_csv =
        "sgd_org,sgd_hybrid,sgd_pub,dpsgd,naive_fusion,naive_fusion_pub,"
        "feature_dp,calibrated_fusion,fusiondp";
    std::string epsilons_csv = "0.1,0.3,0.5,0.7,1.0,1.5,2.0";
    std::string seeds_csv = "1";
    int jobs = 2;
    double delta = 0.0, sample_rate = -1.0, lr = -1.0;
    int public_batch = -1;
  } sweep_args;
  sweep_cmd->add_option("--data-dir", sweep_args.data_dir);
  sweep_cmd->add_option("--hybrid-dir", sweep_args.hybrid_dir);
  sweep_cmd->add_option("--out-dir", sweep_args.out_dir);
  sweep_cmd->add_option("--grid", sweep_args.grid_file,
                        "grid CSV (method,epsilon,epochs,C,alpha,beta,lambda[,lr])");
  sweep_cmd->add_option("--methods", sweep_args.methods_csv);
  sweep_cmd->add_option("--epsilons", sweep_args.epsilons_csv);
  sweep_cmd->add_option("--seeds", sweep_args.seeds_csv);
  sweep_cmd->add_option("--jobs", sweep_args.jobs);
  sweep_cmd->add_option("--delta", sweep_args.delta);
  sweep_cmd->add_option("--sample-rate", sweep_args.sample_rate);
  sweep_cmd->add_option("--lr", sweep_args.lr);
  sweep_cmd->add_option("--public-batch", sweep_args.public_batch);
  sweep_cmd->callback([&] {
    StageTimer timer;
    std::vector<GridCell> cells;
    if (!sweep_args.grid_file.empty()) {
      cells = load_grid_csv(sweep_args.grid_file);
    } else {
      std::vector<Method> methods;
      for (const std::string& name : split_list(sweep_args.methods_csv))
        methods.push_back(method_from_name(name));
      std::vector<double> epsilons;
      for (const std::string& e : split_list(sweep_args.epsilons_csv))
        epsilons.push_back(parse_double_arg(e, "epsilons"));
      cells = default_grid_for(methods, epsilons);
    }
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(sweep_args.seeds_csv))
      seeds.push_back(parse_seed_arg(s));

    bool any_hybrid = std::any_of(cells.begin(), cells.end(), [](const GridCell& c) {
      TrainConfig probe;
      probe.method = c.method;
      return probe.uses_hybrid();
    });
    DataInputs inputs =
        load_inputs(sweep_args.data_dir, sweep_args.hybrid_dir, any_hybrid);

    TrainConfig base;
    if (sweep_args.delta > 0.0) base.delta = sweep_args.delta;
    if (sweep_args.sample_rate > 0.0) base.sample_rate = sweep_args.sample_rate;
    if (sweep_args.lr > 0.0) base.lr = sweep_args.lr;
    if (sweep_args.public_batch > 0) base.public_batch = sweep_args.public_batch;

    SweepOutcome outcome =
        run_sweep(inputs.splits, inputs.hybrid ? &*inputs.hybrid : nullptr, base,
                  cells, seeds, sweep_args.jobs);

    fs::path dir(sweep_args.out_dir);
    fs::create_directories(dir / "runs");
    std::vector<std::string> outputs{"sweep.csv", "cells.csv"};
    for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
      const SweepRunRecord& run = outcome.runs[i];
      char name[160];
      std::snprintf(name, sizeof name, "runs/run%03zu_%s_eps%s_seed%llu.json", i,
                    method_name(run.cell.method).c_str(),
                    format_epsilon(run.cell.epsilon).c_str(),
                    static_cast<unsigned long long>(run.seed));
      std::ofstream out(dir / name, std::ios::binary);
      out << run_result_to_json(run.result);
      outputs.push_back(name);
    }
    // sweep.csv holds the reportable result per (method, epsilon, seed):
    // the grid cell chosen by validation AUPRC. cells.csv is the full
    // per-cell table behind those selections.
    write_sweep_csv(outcome.selected, dir / "sweep.csv");
    write_sweep_csv(outcome.runs, dir / "cells.csv");
    emit_manifest(dir, "sweep", command_line, timer,
                  {sweep_args.data_dir + "/manifest.json"}, outputs);
    std::printf("wrote %s: %zu runs, %zu selected rows\n", sweep_args.out_dir.c_str(),
                outcome.runs.size(), outcome.selected.size());
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "metrics for a scores CSV");
  struct {
    std::string scores;
    double threshold = 0.0;
    std::string out;
  } eval_args;
  eval_cmd->add_option("--scores", eval_args.scores, "CSV with id,score,label")
      ->required();
  eval_cmd->add_option("--threshold", eval_args.threshold,
                       "decision threshold on the score");
  eval_cmd->add_option("--out", eval_args.out, "also write the JSON here");
  eval_cmd->callback([&] {
    ScoredPredictions p = read_scores_csv(eval_args.scores);
    ClassificationReport report = classification_report(p, eval_args.threshold);
    nlohmann::json j;
    j["auprc"] = auprc(p);
    j["auroc"] = auroc(p);
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["accuracy"] = report.accuracy;
    std::string text = j.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    if (!eval_args.out.empty()) {
      std::ofstream out(eval_args.out, std::ios::binary);
      out << text;
    }
  });

  // ---- compare ----
  auto* compare_cmd =
      app.add_subcommand("compare", "compare sweeps and emit plot data");
  struct {
    std::vector<std::string> sweeps;
    std::string metric = "test_auprc";
    std::string out_dir = "compare";
  } compare_args;
  compare_cmd->add_option("--sweep", compare_args.sweeps, "sweep CSV (repeat)")
      ->required();
  compare_cmd->add_option("--metric", compare_args.metric,
                          "test_auprc | test_auroc | val_auprc");
  compare_cmd->add_option("--out-dir", compare_args.out_dir);
  compare_cmd->callback([&] {
    cmd_compare(compare_args.sweeps, compare_args.metric, compare_args.out_dir,
                command_line);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // parse problems are user errors
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == Error::Kind::kUser ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
