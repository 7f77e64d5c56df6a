#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "featdp/train.hpp"

namespace featdp {

/// One hyperparameter cell of a sweep grid. `epsilon` is +infinity for the
/// non-private methods. `lr` <= 0 means "use the base config's rate".
struct GridCell {
  Method method = Method::kFusionDp;
  double epsilon = 0.0;
  int epochs = 13;
  double clip_norm = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  double lr = -1.0;
};

/// The shipped per-(method, epsilon) hyperparameter table used when no grid
/// file is given.
std::vector<GridCell> default_grid();

/// Cells of the default grid restricted to the given methods and budgets
/// (non-private methods ignore the budget list and appear once).
std::vector<GridCell> default_grid_for(const std::vector<Method>& methods,
                                       const std::vector<double>& epsilons);

GridCell parse_grid_row(const std::string& line);
std::vector<GridCell> load_grid_csv(const std::filesystem::path& path);

struct SweepRunRecord {
  GridCell cell;
  std::uint64_t seed = 0;
  RunResult result;
};

struct SweepOutcome {
  std::vector<SweepRunRecord> runs;      // every cell x seed, in sorted order
  std::vector<SweepRunRecord> selected;  // best val-AUPRC cell per (method, epsilon, seed)
};

/// Runs every cell with every seed. `base` supplies everything a cell does
/// not override (lr, sample rate, public batch, delta, widths). Cells run
/// in parallel over `jobs` workers; results are deterministic regardless of
/// scheduling.
SweepOutcome run_sweep(const SplitSet& splits, const HybridSet* hybrid,
                       const TrainConfig& base, const std::vector<GridCell>& cells,
                       const std::vector<std::uint64_t>& seeds, int jobs = 1,
                       const std::function<void(const SweepRunRecord&)>& on_run = {});

TrainConfig cell_to_config(const TrainConfig& base, const GridCell& cell,
                           std::uint64_t seed);

/// Sweep CSV with columns method,epsilon,epochs,C,alpha,beta,lambda,seed,
/// val_auprc,test_auprc,test_auroc,achieved_epsilon, sorted by
/// (method, epsilon, seed).
void write_sweep_csv(const std::vector<SweepRunRecord>& runs,
                     const std::filesystem::path& path);

struct SweepCsvRow {
  std::string method;
  double epsilon = 0.0;
  int epochs = 0;
  double clip_norm = 0.0, alpha = 0.0, beta = 0.0, lambda = 0.0;
  std::uint64_t seed = 0;
  double val_auprc = 0.0, test_auprc = 0.0, test_auroc = 0.0;
  double achieved_epsilon = 0.0;
};
std::vector<SweepCsvRow> read_sweep_csv(const std::filesystem::path& path);

/// Deterministic JSON for a run: config echo, resolved mechanism
/// parameters, per-epoch trajectory, and final metrics. Contains no
/// timestamps or wall-clock so reruns are byte-identical.
std::string run_result_to_json(const RunResult& result);

// Key-value run-config documents mirroring TrainConfig field names.
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& config, const std::filesystem::path& path);

std::string format_epsilon(double epsilon);  // "inf" for non-private rows

}  // namespace featdp
