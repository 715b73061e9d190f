#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ucil/adam.hpp"
#include "ucil/baselines.hpp"
#include "ucil/dataset.hpp"
#include "ucil/memory.hpp"
#include "ucil/model.hpp"

namespace ucil {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t warmup_epochs = 50;  // linear ramp 0 -> lr_max, then flat
  double lr_max = 1e-3;
  std::size_t batch_size = 48;  // must be divisible by 4
  std::size_t patience = 50;    // early stop on stalled validation loss
  double ema_decay = 0.999;
  double omega = 2.0;           // lambda = omega * sqrt(|C|/|C_new|)
  double lambda_override = -1;  // >= 0 replaces the adaptive lambda
  double lambda_ewc = 100.0;    // weight on the Fisher penalty when provided
  bool indl = true;             // new-clip BCE on the task's classes only; off
                                // treats missing old labels as negatives
  bool fd = true;               // cosine feature distillation on labeled clips
  bool od = true;               // logit distillation on labeled clips
  bool uod = true;              // logit distillation on selected unlabeled clips
  bool od_rehearsal = true;     // false: distillation touches new-task clips only
  std::size_t max_steps_per_epoch = 0;  // 0: one pass over the new labeled pool
  std::uint64_t seed = 0;

  void validate() const;
};

// Everything train_task reads besides the model: the task's data partitions,
// optional frozen previous-phase model, optional exemplar store, and optional
// Fisher terms (anchor + diagonal switch the EWC penalty on).
struct TaskContext {
  const Dataset* data = nullptr;
  const TaskData* part = nullptr;
  std::vector<std::int32_t> new_classes;
  const SedModel* snap = nullptr;
  const RehearsalStore* store = nullptr;
  const FisherDiagonal* fisher = nullptr;
  const SedModel* anchor = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double bce = 0.0;
  double fd = 0.0;
  double od = 0.0;  // lambda-scaled logit distillation, or the EWC penalty
  double uod = 0.0;
  double total = 0.0;
  double val_total = 0.0;
};

// One log line: epoch, lr, L_BCE, L_FD, L_OD, L_UOD, total, val_total.
std::string format_log_line(const EpochRecord& rec);
void write_log(const std::vector<EpochRecord>& log, const std::string& path);
std::vector<EpochRecord> read_log(const std::string& path);

struct TrainResult {
  SedModel model;    // student weights at the stopping epoch
  SedModel teacher;  // EMA of the student, same layout
  std::vector<EpochRecord> log;
  std::size_t steps = 0;  // optimizer steps actually taken
};

// Runs the task's epoch loop: seeded batch assembly, total-loss backward,
// Adam step, teacher EMA update, per-epoch validation and early stopping.
TrainResult train_task(const SedModel& model, const TaskContext& ctx, const TrainConfig& cfg);

}  // namespace ucil
