#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucil/config.hpp"
#include "ucil/trainer.hpp"

namespace ucil {

// Per-class segment F1 on the held-out corpus after one task.
struct SnapshotScores {
  std::size_t task_index = 0;
  std::vector<std::int32_t> classes;  // model class order after the task
  std::vector<double> class_seg_f1;   // aligned with classes
};

// FNV-1a over a stage's canonical output bytes; equal prefixes across two
// runs localize where their pipelines first diverged.
struct StageHash {
  std::string name;
  std::uint64_t hash = 0;
};

struct RunReport {
  Method method = Method::Ucil;
  TaskMode task_mode = TaskMode::TwoTask;
  std::size_t cap_strong = 0;
  std::size_t cap_weak = 0;
  bool fd = true, ul = true, mu = true;
  std::uint64_t seed = 0;
  double psds1 = 0.0;   // timing-precision scenario, final model
  double psds2 = 0.0;   // class-confusion scenario, final model
  double seg_f1 = 0.0;  // macro segment F1 over the full class set
  std::vector<SnapshotScores> snapshots;        // one per task
  std::vector<std::vector<EpochRecord>> task_logs;
  std::vector<StageHash> stages;
};

// Runs tasks sequentially: partition, head expansion, training, per-task
// evaluation snapshot, memory update, then the final scoring pass. The run
// seed drives the task split and every training-time draw; the corpus comes
// from the config's data seed. Deterministic: same config + seed -> same
// report bytes.
RunReport run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

std::string format_report(const RunReport& rep);
void write_report(const RunReport& rep, const std::string& path);

// One aggregated row: medians over the seeds that completed.
struct MatrixRow {
  Method method = Method::Ucil;
  TaskMode task_mode = TaskMode::TwoTask;
  std::size_t cap_strong = 0;
  std::size_t cap_weak = 0;
  bool fd = true, ul = true, mu = true;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double psds1 = 0.0, psds2 = 0.0, seg_f1 = 0.0;
  std::string error;  // first failure, empty when every seed completed
};

double median(std::vector<double> values);  // errors on empty input

MatrixRow summarize_runs(const ExperimentConfig& cfg, const std::vector<RunReport>& runs,
                         std::size_t n_failed, const std::string& error);

// Runs every config over its seed list; per-seed failures are recorded in the
// row and the table is still emitted. Every config is validated up front.
std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs);

std::string format_matrix(const std::vector<MatrixRow>& rows);

// Per-task loss curves as tab-separated files under dir (loss_task<i>.tsv).
void emit_plotdata(const RunReport& rep, const std::string& dir);

// Score-vs-capacity series, one line per row.
void emit_capacity_series(const std::vector<MatrixRow>& rows, const std::string& path);

}  // namespace ucil
