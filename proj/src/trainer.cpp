#include "ucil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "ucil/losses.hpp"
#include "ucil/rng.hpp"

namespace ucil {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
  if (batch_size < 4 || batch_size % 4 != 0) {
    throw std::invalid_argument("train config: batch size must be a positive multiple of 4");
  }
  if (lr_max <= 0.0) throw std::invalid_argument("train config: lr_max must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0) {
    throw std::invalid_argument("train config: ema decay must lie in [0, 1)");
  }
  if (omega <= 0.0) throw std::invalid_argument("train config: omega must be positive");
}

std::string format_log_line(const EpochRecord& rec) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g",
                rec.epoch, rec.lr, rec.bce, rec.fd, rec.od, rec.uod, rec.total, rec.val_total);
  return buf;
}

void write_log(const std::vector<EpochRecord>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write log: " + path);
  os << "epoch\tlr\tL_BCE\tL_FD\tL_OD\tL_UOD\ttotal\tval_total\n";
  for (const EpochRecord& rec : log) os << format_log_line(rec) << "\n";
}

std::vector<EpochRecord> read_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read log: " + path);
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("epoch\t", 0) == 0) continue;
    std::istringstream ls(line);
    EpochRecord rec;
    if (!(ls >> rec.epoch >> rec.lr >> rec.bce >> rec.fd >> rec.od >> rec.uod >> rec.total >>
          rec.val_total)) {
      throw std::runtime_error("malformed log line: " + line);
    }
    out.push_back(rec);
  }
  return out;
}

namespace {

// Cyclic cursor over a per-epoch shuffle of one clip stream.
struct StreamCursor {
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  std::size_t next() {
    const std::size_t idx = order[pos % order.size()];
    ++pos;
    return idx;
  }
};

std::vector<std::size_t> class_positions(const SedModel& model,
                                         const std::vector<std::int32_t>& wanted) {
  std::vector<std::size_t> out;
  out.reserve(wanted.size());
  for (std::int32_t c : wanted) {
    bool found = false;
    for (std::size_t p = 0; p < model.class_order.size(); ++p) {
      if (model.class_order[p] == c) {
        out.push_back(p);
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::invalid_argument("train_task: class " + std::to_string(c) +
                                  " missing from the model head order");
    }
  }
  return out;
}

}  // namespace

TrainResult train_task(const SedModel& model, const TaskContext& ctx, const TrainConfig& cfg) {
  cfg.validate();
  if (ctx.data == nullptr || ctx.part == nullptr) {
    throw std::invalid_argument("train_task: missing dataset or task partition");
  }
  if (ctx.new_classes.empty()) throw std::invalid_argument("train_task: no new classes");
  const Dataset& data = *ctx.data;
  const TaskData& part = *ctx.part;
  if (part.strong.empty() && part.weak.empty()) {
    throw std::invalid_argument("train_task: empty training partition");
  }
  if ((ctx.fisher == nullptr) != (ctx.anchor == nullptr)) {
    throw std::invalid_argument("train_task: fisher and anchor must be provided together");
  }

  TrainResult result;
  result.model = model;
  SedModel& student = result.model;
  const std::size_t n_ext = ctx.snap != nullptr ? ctx.snap->n_classes() : 0;
  if (ctx.snap != nullptr && n_ext + ctx.new_classes.size() != student.n_classes()) {
    throw std::invalid_argument("train_task: snapshot heads plus new classes do not match");
  }

  const std::vector<std::size_t> new_subset = class_positions(student, ctx.new_classes);
  std::vector<std::size_t> full_subset(student.n_classes());
  for (std::size_t i = 0; i < full_subset.size(); ++i) full_subset[i] = i;

  const bool distill_labeled = ctx.snap != nullptr && (cfg.fd || cfg.od);
  const bool distill_unlabeled = ctx.snap != nullptr && cfg.uod && !part.unlabeled.empty();
  const double lambda =
      cfg.od ? (cfg.lambda_override >= 0.0
                    ? cfg.lambda_override
                    : adaptive_lambda(student.n_classes(), ctx.new_classes.size(), cfg.omega))
             : 0.0;

  // Per-step slot plan; the store is frozen during the task so this is static.
  const std::size_t slots = cfg.batch_size / 4;
  const std::size_t store_s = ctx.store != nullptr ? ctx.store->strong.size() : 0;
  const std::size_t store_w = ctx.store != nullptr ? ctx.store->weak.size() : 0;
  std::size_t reh_s = std::min(store_s, part.strong.empty() ? slots : slots / 2);
  std::size_t reh_w = std::min(store_w, part.weak.empty() ? slots : slots / 2);
  const std::size_t new_s = part.strong.empty() ? 0 : slots - reh_s;
  const std::size_t new_w = part.weak.empty() ? 0 : slots - reh_w;
  const std::size_t slots_u = distill_unlabeled ? cfg.batch_size / 2 : 0;

  const std::size_t new_per_step = new_s + new_w;
  const std::size_t n_new = part.strong.size() + part.weak.size();
  const std::size_t steps_per_epoch =
      cfg.max_steps_per_epoch > 0 ? cfg.max_steps_per_epoch
                                  : std::max<std::size_t>(1, (n_new + new_per_step - 1) /
                                                                 new_per_step);

  // Frozen-model outputs and rasterized targets, cached per clip for the task.
  std::unordered_map<std::size_t, SnapshotOutputs> snap_cache;
  auto snap_of = [&](std::size_t idx) -> const SnapshotOutputs* {
    auto it = snap_cache.find(idx);
    if (it == snap_cache.end()) {
      it = snap_cache.emplace(idx, snapshot_outputs(*ctx.snap, data.features[idx])).first;
    }
    return &it->second;
  };
  std::unordered_map<std::size_t, Tensor> new_targets, full_targets;
  auto targets_of = [&](std::size_t idx, bool full) -> const Tensor& {
    auto& cache = full ? full_targets : new_targets;
    auto it = cache.find(idx);
    if (it == cache.end()) {
      const std::vector<std::int32_t>& allowed = full ? student.class_order : ctx.new_classes;
      it = cache
               .emplace(idx, rasterize_targets(data.clips[idx], data.frame_count,
                                               student.class_order, allowed))
               .first;
    }
    return it->second;
  };

  auto labeled_example = [&](std::size_t idx, bool rehearsal) {
    LabeledExample ex;
    ex.clip = &data.features[idx];
    ex.targets = targets_of(idx, rehearsal);
    ex.bce_subset = rehearsal || !cfg.indl ? full_subset : new_subset;
    if (distill_labeled && (!rehearsal || cfg.od_rehearsal)) ex.snap = snap_of(idx);
    return ex;
  };

  result.teacher = snapshot(student);
  AdamState adam(student.params());
  AdamConfig adam_cfg;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double ramp =
        cfg.warmup_epochs == 0
            ? 1.0
            : std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs));
    adam_cfg.lr = cfg.lr_max * ramp;

    Rng rng(derive_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
    StreamCursor cur_s{part.strong, 0}, cur_w{part.weak, 0}, cur_u{part.unlabeled, 0};
    rng.shuffle(cur_s.order);
    rng.shuffle(cur_w.order);
    rng.shuffle(cur_u.order);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam_cfg.lr;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<LabeledExample> labeled;
      std::vector<UnlabeledExample> unlabeled;
      labeled.reserve(new_s + new_w + reh_s + reh_w);
      unlabeled.reserve(slots_u);
      for (std::size_t i = 0; i < new_s; ++i) labeled.push_back(labeled_example(cur_s.next(), false));
      for (std::size_t i = 0; i < new_w; ++i) labeled.push_back(labeled_example(cur_w.next(), false));
      if (reh_s + reh_w > 0) {
        const RehearsalBatch reh = draw_rehearsal(
            *ctx.store, reh_s, reh_w,
            derive_seed(cfg.seed, "reh/" + std::to_string(epoch) + "/" + std::to_string(step)));
        for (std::size_t idx : reh.strong) labeled.push_back(labeled_example(idx, true));
        for (std::size_t idx : reh.weak) labeled.push_back(labeled_example(idx, true));
      }
      for (std::size_t i = 0; i < slots_u; ++i) {
        const std::size_t idx = cur_u.next();
        unlabeled.push_back({&data.features[idx], snap_of(idx)});
      }

      Tape tape;
      TapedLeaves leaves = register_leaves(tape, student);
      TotalLossSpec spec{n_ext, lambda, cfg.fd, distill_unlabeled};
      TotalLossVars loss = compose_total_loss(tape, leaves, student, labeled, unlabeled, spec);
      Var objective = loss.total;
      double penalty = 0.0;
      if (ctx.fisher != nullptr) {
        Var pen = taped_ewc_penalty(tape, leaves, *ctx.anchor, *ctx.fisher, cfg.lambda_ewc);
        penalty = tape.value(pen).at(0);
        objective = tape.add(objective, pen);
      }

      Gradients grads = tape.backward(objective);
      std::vector<Tensor> g = collect_grads(grads, leaves);
      std::vector<Tensor*> params = student.params();
      adam_step(params, g, adam, adam_cfg);
      ema_update(result.teacher, student, cfg.ema_decay);
      ++result.steps;

      rec.bce += tape.value(loss.bce).at(0);
      rec.fd += tape.value(loss.fd).at(0);
      rec.od += tape.value(loss.od).at(0) + penalty;
      rec.uod += tape.value(loss.uod).at(0);
      rec.total += tape.value(objective).at(0);
    }
    const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
    rec.bce *= inv_steps;
    rec.fd *= inv_steps;
    rec.od *= inv_steps;
    rec.uod *= inv_steps;
    rec.total *= inv_steps;

    // Validation: the same data terms over the held-out clips, no unlabeled
    // stream and no parameter penalty.
    const std::size_t n_val = part.val_strong.size() + part.val_weak.size();
    if (n_val > 0) {
      std::vector<LabeledExample> val;
      val.reserve(n_val);
      for (std::size_t idx : part.val_strong) val.push_back(labeled_example(idx, false));
      for (std::size_t idx : part.val_weak) val.push_back(labeled_example(idx, false));
      Tape tape;
      TapedLeaves leaves = register_leaves(tape, student);
      TotalLossSpec spec{n_ext, lambda, cfg.fd, false};
      TotalLossVars loss = compose_total_loss(tape, leaves, student, val, {}, spec);
      rec.val_total = tape.value(loss.total).at(0);
    }
    result.log.push_back(rec);

    if (n_val > 0) {
      if (rec.val_total < best_val) {
        best_val = rec.val_total;
        stalled = 0;
      } else if (++stalled >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace ucil
