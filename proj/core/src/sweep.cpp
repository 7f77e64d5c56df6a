#include "featdp/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "featdp/error.hpp"
#include "featdp/version.hpp"

namespace featdp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string format_epsilon(double epsilon) {
  return std::isinf(epsilon) ? "inf" : fmt(epsilon);
}

std::vector<GridCell> default_grid() {
  // One row per (method, epsilon): epochs, C, alpha, beta; the naive-fusion
  // entries store their averaging weight in lambda.
  struct Row { Method m; double eps; int epochs; double c, alpha, beta; };
  static const Row dp_rows[] = {
      {Method::kFusionDp, 0.1, 13, 0.1, 5.0, 0.2},
      {Method::kFusionDp, 0.3, 7, 0.2, 8.0, 0.5},
      {Method::kFusionDp, 0.5, 7, 0.5, 5.0, 0.2},
      {Method::kFusionDp, 0.7, 7, 0.4, 10.0, 0.2},
      {Method::kFusionDp, 1.0, 7, 0.6, 8.0, 0.2},
      {Method::kFusionDp, 1.5, 13, 1.3, 3.0, 0.5},
      {Method::kFusionDp, 2.0, 13, 1.8, 3.0, 0.5},
      {Method::kDpSgd, 0.1, 7, 0.2, 0.0, 0.0},
      {Method::kDpSgd, 0.3, 13, 0.5, 0.0, 0.0},
      {Method::kDpSgd, 0.5, 13, 1.0, 0.0, 0.0},
      {Method::kDpSgd, 0.7, 13, 1.5, 0.0, 0.0},
      {Method::kDpSgd, 1.0, 13, 2.5, 0.0, 0.0},
      {Method::kDpSgd, 1.5, 13, 2.5, 0.0, 0.0},
      {Method::kDpSgd, 2.0, 13, 2.5, 0.0, 0.0},
      {Method::kFeatureDp, 0.1, 13, 0.05, 8.0, 0.0},
      {Method::kFeatureDp, 0.3, 13, 0.3, 3.0, 0.0},
      {Method::kFeatureDp, 0.5, 7, 1.0, 8.0, 0.0},
      {Method::kFeatureDp, 0.7, 13, 1.5, 5.0, 0.0},
      {Method::kFeatureDp, 1.0, 13, 1.8, 3.0, 0.0},
      {Method::kFeatureDp, 1.5, 7, 2.0, 5.0, 0.0},
      {Method::kFeatureDp, 2.0, 13, 2.5, 3.0, 0.0},
      {Method::kCalibratedFusion, 0.1, 13, 0.05, 8.0, 0.0},
      {Method::kCalibratedFusion, 0.3, 13, 0.1, 8.0, 0.0},
      {Method::kCalibratedFusion, 0.5, 13, 0.3, 5.0, 0.0},
      {Method::kCalibratedFusion, 0.7, 13, 0.5, 3.0, 0.0},
      {Method::kCalibratedFusion, 1.0, 13, 1.0, 3.0, 0.0},
      {Method::kCalibratedFusion, 1.5, 13, 1.2, 3.0, 0.0},
      {Method::kCalibratedFusion, 2.0, 13, 1.0, 5.0, 0.0},
  };
  // Naive-fusion rows: the table weight is the averaging lambda.
  static const Row naive_rows[] = {
      {Method::kNaiveFusion, 0.1, 13, 0.1, 0.5, 0.0},
      {Method::kNaiveFusion, 0.3, 13, 0.5, 0.8, 0.0},
      {Method::kNaiveFusion, 0.5, 13, 1.5, 0.8, 0.0},
      {Method::kNaiveFusion, 0.7, 13, 2.0, 0.8, 0.0},
      {Method::kNaiveFusion, 1.0, 13, 2.2, 0.8, 0.0},
      {Method::kNaiveFusion, 1.5, 13, 2.5, 1.0, 0.0},
      {Method::kNaiveFusion, 2.0, 13, 3.0, 1.0, 0.0},
  };

  std::vector<GridCell> grid;
  for (const Row& r : dp_rows) {
    GridCell cell;
    cell.method = r.m;
    cell.epsilon = r.eps;
    cell.epochs = r.epochs;
    cell.clip_norm = r.c;
    cell.alpha = r.alpha;
    cell.beta = r.beta;
    grid.push_back(cell);
  }
  for (const Row& r : naive_rows) {
    for (Method m : {Method::kNaiveFusion, Method::kNaiveFusionPub}) {
      GridCell cell;
      cell.method = m;
      cell.epsilon = r.eps;
      cell.epochs = r.epochs;
      cell.clip_norm = r.c;
      cell.lambda = r.alpha;
      grid.push_back(cell);
    }
  }
  // The consistency weight was swept over [0, 1]; extend the fusiondp grid
  // around the calibrated-fusion cells with small betas and a wider clip so
  // selection can back off the alignment term when the imputer is weak
  // (beta = 0 is the calibrated degenerate point of the same loss).
  for (const Row& r : dp_rows) {
    if (r.m != Method::kCalibratedFusion) continue;
    auto mirror = [&](double clip_scale, double beta) {
      GridCell cell;
      cell.method = Method::kFusionDp;
      cell.epsilon = r.eps;
      cell.epochs = r.epochs;
      cell.clip_norm = r.c * clip_scale;
      cell.alpha = r.alpha;
      cell.beta = beta;
      grid.push_back(cell);
    };
    mirror(1.0, 0.0);
    mirror(1.0, 0.05);
    mirror(2.0, 0.0);
  }
  // Non-private baselines: a short budget with best-epoch checkpointing.
  // The hybrid-vs-masked contrast is a convergence-speed effect, visible
  // under a constrained budget and washed out once both models near the
  // public-information ceiling of the synthetic task.
  for (Method m : {Method::kSgdOrg, Method::kSgdHybrid, Method::kSgdPub}) {
    GridCell cell;
    cell.method = m;
    cell.epsilon = kInf;
    cell.epochs = 5;
    grid.push_back(cell);
  }
  return grid;
}

std::vector<GridCell> default_grid_for(const std::vector<Method>& methods,
                                       const std::vector<double>& epsilons) {
  std::vector<GridCell> out;
  for (const GridCell& cell : default_grid()) {
    if (std::find(methods.begin(), methods.end(), cell.method) == methods.end())
      continue;
    if (!std::isinf(cell.epsilon)) {
      bool wanted = std::any_of(epsilons.begin(), epsilons.end(), [&](double e) {
        return std::fabs(e - cell.epsilon) < 1e-12;
      });
      if (!wanted) continue;
    }
    out.push_back(cell);
  }
  return out;
}

GridCell parse_grid_row(const std::string& line) {
  std::istringstream row(line);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(row, field, ',')) fields.push_back(field);
  if (fields.size() < 7)
    throw user_error("grid: row needs method,epsilon,epochs,C,alpha,beta,lambda");
  try {
    GridCell cell;
    cell.method = method_from_name(fields[0]);
    cell.epsilon = (fields[1] == "inf") ? kInf : std::stod(fields[1]);
    cell.epochs = std::stoi(fields[2]);
    cell.clip_norm = std::stod(fields[3]);
    cell.alpha = std::stod(fields[4]);
    cell.beta = std::stod(fields[5]);
    cell.lambda = std::stod(fields[6]);
    if (fields.size() > 7 && !fields[7].empty()) cell.lr = std::stod(fields[7]);
    return cell;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw user_error("grid: malformed row '" + line + "'");
  }
}

std::vector<GridCell> load_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("grid: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("grid: empty file");
  std::vector<GridCell> cells;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    cells.push_back(parse_grid_row(line));
  }
  if (cells.empty()) throw user_error("grid: no cells in " + path.string());
  return cells;
}

TrainConfig cell_to_config(const TrainConfig& base, const GridCell& cell,
                           std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.method = cell.method;
  cfg.epochs = cell.epochs;
  cfg.clip_norm = cell.clip_norm > 0.0 ? cell.clip_norm : base.clip_norm;
  cfg.epsilon = std::isinf(cell.epsilon) ? 0.0 : cell.epsilon;
  cfg.alpha = cell.alpha;
  cfg.beta = cell.beta;
  cfg.lambda = cell.lambda;
  if (cell.lr > 0.0) cfg.lr = cell.lr;
  cfg.run_seed = seed;
  return cfg;
}

SweepOutcome run_sweep(const SplitSet& splits, const HybridSet* hybrid,
                       const TrainConfig& base, const std::vector<GridCell>& cells,
                       const std::vector<std::uint64_t>& seeds, int jobs,
                       const std::function<void(const SweepRunRecord&)>& on_run) {
  if (cells.empty()) throw user_error("sweep: empty grid");
  if (seeds.empty()) throw user_error("sweep: need at least one seed");

  struct Job {
    GridCell cell;
    std::uint64_t seed;
  };
  std::vector<Job> todo;
  for (const GridCell& cell : cells)
    for (std::uint64_t seed : seeds) todo.push_back({cell, seed});

  std::vector<SweepRunRecord> records(todo.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      try {
        TrainConfig cfg = cell_to_config(base, todo[i].cell, todo[i].seed);
        RunResult result = train(splits, cfg.uses_hybrid() ? hybrid : nullptr, cfg);
        result.best_model.reset();  // sweeps keep metrics, not checkpoints
        records[i] = SweepRunRecord{todo[i].cell, todo[i].seed, std::move(result)};
        if (on_run) {
          std::lock_guard<std::mutex> lock(callback_mutex);
          on_run(records[i]);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(todo.size());
        return;
      }
    }
  };

  int workers = std::max(1, std::min<int>(jobs, static_cast<int>(todo.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepOutcome outcome;
  outcome.runs = std::move(records);
  std::stable_sort(outcome.runs.begin(), outcome.runs.end(),
                   [](const SweepRunRecord& a, const SweepRunRecord& b) {
                     std::string ma = method_name(a.cell.method);
                     std::string mb = method_name(b.cell.method);
                     if (ma != mb) return ma < mb;
                     if (a.cell.epsilon != b.cell.epsilon)
                       return a.cell.epsilon < b.cell.epsilon;
                     return a.seed < b.seed;
                   });

  // Best cell per (method, epsilon, seed) by validation AUPRC.
  std::map<std::tuple<std::string, double, std::uint64_t>, const SweepRunRecord*> best;
  for (const SweepRunRecord& run : outcome.runs) {
    auto key = std::make_tuple(method_name(run.cell.method), run.cell.epsilon, run.seed);
    auto it = best.find(key);
    if (it == best.end() ||
        run.result.val_auprc_best > it->second->result.val_auprc_best)
      best[key] = &run;
  }
  for (const auto& [key, run] : best) outcome.selected.push_back(*run);
  return outcome;
}

void write_sweep_csv(const std::vector<SweepRunRecord>& runs,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("sweep: cannot write " + path.string());
  out << "method,epsilon,epochs,C,alpha,beta,lambda,seed,val_auprc,test_auprc,"
         "test_auroc,achieved_epsilon\n";
  for (const SweepRunRecord& run : runs) {
    out << method_name(run.cell.method) << ',' << format_epsilon(run.cell.epsilon)
        << ',' << run.cell.epochs << ',' << fmt(run.cell.clip_norm) << ','
        << fmt(run.cell.alpha) << ',' << fmt(run.cell.beta) << ','
        << fmt(run.cell.lambda) << ',' << run.seed << ','
        << fmt(run.result.val_auprc_best, "%.6f") << ','
        << fmt(run.result.test_auprc, "%.6f") << ','
        << fmt(run.result.test_auroc, "%.6f") << ','
        << format_epsilon(run.result.achieved_epsilon) << '\n';
  }
}

std::vector<SweepCsvRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("sweep: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw user_error("sweep: empty file " + path.string());
  std::vector<SweepCsvRow> rows;
  auto parse = [](const std::string& s) {
    return s == "inf" ? kInf : std::stod(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream r(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(r, field, ',')) f.push_back(field);
    if (f.size() != 12)
      throw user_error("sweep: malformed row in " + path.string());
    SweepCsvRow row;
    row.method = f[0];
    row.epsilon = parse(f[1]);
    row.epochs = std::stoi(f[2]);
    row.clip_norm = std::stod(f[3]);
    row.alpha = std::stod(f[4]);
    row.beta = std::stod(f[5]);
    row.lambda = std::stod(f[6]);
    row.seed = std::stoull(f[7]);
    row.val_auprc = std::stod(f[8]);
    row.test_auprc = std::stod(f[9]);
    row.test_auroc = std::stod(f[10]);
    row.achieved_epsilon = parse(f[11]);
    rows.push_back(row);
  }
  return rows;
}

std::string run_result_to_json(const RunResult& r) {
  nlohmann::json j;
  const TrainConfig& c = r.config;
  nlohmann::json cfg;
  cfg["method"] = method_name(c.method);
  cfg["epochs"] = c.epochs;
  cfg["lr"] = c.lr;
  cfg["lr_decay_factor"] = c.lr_decay_factor;
  cfg["lr_decay_every"] = c.lr_decay_every;
  cfg["clip_norm"] = c.clip_norm;
  cfg["epsilon"] = c.epsilon;
  cfg["delta"] = c.delta;
  cfg["sigma"] = c.sigma;
  cfg["sample_rate"] = c.sample_rate;
  cfg["public_batch"] = c.public_batch;
  cfg["alpha"] = c.alpha;
  cfg["beta"] = c.beta;
  cfg["lambda"] = c.lambda;
  cfg["run_seed"] = c.run_seed;
  cfg["hidden"] = c.hidden;
  j["config"] = cfg;

  nlohmann::json resolved;
  resolved["sigma"] = r.sigma_used;
  resolved["sample_rate"] = r.sample_rate_used;
  resolved["public_batch"] = r.public_batch_used;
  resolved["steps"] = r.steps_run;
  resolved["delta"] = r.delta_used;
  j["resolved"] = resolved;

  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochMetrics& m : r.per_epoch) {
    nlohmann::json e;
    e["epoch"] = m.epoch;
    e["val_auprc"] = m.val_auprc;
    e["val_auroc"] = m.val_auroc;
    if (std::isinf(m.epsilon_spent))
      e["epsilon_spent"] = "inf";
    else
      e["epsilon_spent"] = m.epsilon_spent;
    epochs.push_back(e);
  }
  j["per_epoch"] = epochs;

  j["best_epoch"] = r.best_epoch;
  j["val_auprc"] = r.val_auprc_best;
  nlohmann::json final_metrics;
  final_metrics["test_auprc"] = r.test_auprc;
  final_metrics["test_auroc"] = r.test_auroc;
  final_metrics["test_precision"] = r.test_report.precision;
  final_metrics["test_recall"] = r.test_report.recall;
  final_metrics["test_f1"] = r.test_report.f1;
  final_metrics["test_accuracy"] = r.test_report.accuracy;
  j["final"] = final_metrics;
  if (std::isinf(r.achieved_epsilon))
    j["achieved_epsilon"] = "inf";
  else
    j["achieved_epsilon"] = r.achieved_epsilon;
  j["achieved_delta"] = r.achieved_delta;
  j["tool_version"] = FEATDP_VERSION;
  return j.dump(2) + "\n";
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw user_error("config: cannot open " + path.string());
  TrainConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string key;
    row >> key;
    if (key == "method") {
      std::string v;
      row >> v;
      cfg.method = method_from_name(v);
    } else if (key == "epochs") row >> cfg.epochs;
    else if (key == "lr") row >> cfg.lr;
    else if (key == "lr_decay_factor") row >> cfg.lr_decay_factor;
    else if (key == "lr_decay_every") row >> cfg.lr_decay_every;
    else if (key == "clip_norm") row >> cfg.clip_norm;
    else if (key == "epsilon") row >> cfg.epsilon;
    else if (key == "delta") row >> cfg.delta;
    else if (key == "sigma") row >> cfg.sigma;
    else if (key == "sample_rate") row >> cfg.sample_rate;
    else if (key == "public_batch") row >> cfg.public_batch;
    else if (key == "alpha") row >> cfg.alpha;
    else if (key == "beta") row >> cfg.beta;
    else if (key == "lambda") row >> cfg.lambda;
    else if (key == "run_seed") row >> cfg.run_seed;
    else if (key == "hidden") {
      cfg.hidden.clear();
      std::size_t h;
      while (row >> h) cfg.hidden.push_back(h);
    } else {
      throw user_error("config: unknown key '" + key + "' in " + path.string());
    }
  }
  return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw internal_error("config: cannot write " + path.string());
  out << "# featdp run config\n";
  out << "method " << method_name(cfg.method) << '\n';
  out << "epochs " << cfg.epochs << '\n';
  out << "lr " << fmt(cfg.lr, "%.17g") << '\n';
  out << "lr_decay_factor " << fmt(cfg.lr_decay_factor, "%.17g") << '\n';
  out << "lr_decay_every " << cfg.lr_decay_every << '\n';
  out << "clip_norm " << fmt(cfg.clip_norm, "%.17g") << '\n';
  out << "epsilon " << fmt(cfg.epsilon, "%.17g") << '\n';
  out << "delta " << fmt(cfg.delta, "%.17g") << '\n';
  out << "sigma " << fmt(cfg.sigma, "%.17g") << '\n';
  out << "sample_rate " << fmt(cfg.sample_rate, "%.17g") << '\n';
  out << "public_batch " << cfg.public_batch << '\n';
  out << "alpha " << fmt(cfg.alpha, "%.17g") << '\n';
  out << "beta " << fmt(cfg.beta, "%.17g") << '\n';
  out << "lambda " << fmt(cfg.lambda, "%.17g") << '\n';
  out << "run_seed " << cfg.run_seed << '\n';
  out << "hidden";
  for (std::size_t h : cfg.hidden) out << ' ' << h;
  out << '\n';
}

}  // namespace featdp
