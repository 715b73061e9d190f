#include "ucil/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ucil/baselines.hpp"
#include "ucil/eval.hpp"
#include "ucil/memory.hpp"
#include "ucil/rng.hpp"

namespace ucil {

namespace {

constexpr std::size_t kMedianWidth = 7;
constexpr double kSegThreshold = 0.5;
constexpr double kSegmentSeconds = 1.0;

// --- canonical-byte hashing ---

void hash_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  h = fnv1a(b, sizeof b, h);
}

void hash_double(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  hash_u64(h, bits);
}

void hash_str(std::uint64_t& h, const std::string& s) {
  hash_u64(h, s.size());
  h = fnv1a(s.data(), s.size(), h);
}

void hash_tensor(std::uint64_t& h, const Tensor& t) {
  hash_u64(h, t.shape.size());
  for (std::size_t d : t.shape) hash_u64(h, d);
  for (double v : t.data) hash_double(h, v);
}

void hash_indices(std::uint64_t& h, const std::vector<std::size_t>& xs) {
  hash_u64(h, xs.size());
  for (std::size_t x : xs) hash_u64(h, x);
}

std::uint64_t hash_dataset(const Dataset& data, std::uint64_t h = 1469598103934665603ull) {
  hash_u64(h, data.class_names.size());
  for (const auto& n : data.class_names) hash_str(h, n);
  hash_u64(h, data.clips.size());
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const ClipRecord& c = data.clips[i];
    hash_str(h, c.clip_id);
    hash_u64(h, static_cast<std::uint64_t>(c.kind));
    hash_u64(h, c.events.size());
    for (const Event& e : c.events) {
      hash_u64(h, static_cast<std::uint64_t>(e.class_id));
      hash_double(h, e.onset);
      hash_double(h, e.offset);
    }
    hash_u64(h, c.weak_labels.size());
    for (std::int32_t l : c.weak_labels) hash_u64(h, static_cast<std::uint64_t>(l));
    hash_double(h, c.duration);
    hash_tensor(h, data.features[i]);
  }
  return h;
}

std::uint64_t hash_tasks(const std::vector<TaskSpec>& tasks) {
  std::uint64_t h = fnv1a("split");
  hash_u64(h, tasks.size());
  for (const TaskSpec& t : tasks) {
    hash_u64(h, t.task_index);
    hash_u64(h, t.class_ids.size());
    for (std::int32_t c : t.class_ids) hash_u64(h, static_cast<std::uint64_t>(c));
  }
  return h;
}

std::uint64_t hash_partition(const TaskData& part) {
  std::uint64_t h = fnv1a("part");
  hash_indices(h, part.strong);
  hash_indices(h, part.weak);
  hash_indices(h, part.unlabeled);
  hash_indices(h, part.val_strong);
  hash_indices(h, part.val_weak);
  return h;
}

std::uint64_t hash_model(const SedModel& model, std::uint64_t h = 1469598103934665603ull) {
  hash_u64(h, model.class_order.size());
  for (std::int32_t c : model.class_order) hash_u64(h, static_cast<std::uint64_t>(c));
  for (const Tensor* p : static_cast<const SedModel&>(model).params()) hash_tensor(h, *p);
  return h;
}

std::uint64_t hash_train(const SedModel& student, const SedModel& teacher,
                         const std::vector<EpochRecord>& log) {
  std::uint64_t h = fnv1a("train");
  h = hash_model(student, h);
  h = hash_model(teacher, h);
  hash_u64(h, log.size());
  for (const EpochRecord& r : log) {
    hash_u64(h, r.epoch);
    hash_double(h, r.lr);
    hash_double(h, r.bce);
    hash_double(h, r.fd);
    hash_double(h, r.od);
    hash_double(h, r.uod);
    hash_double(h, r.total);
    hash_double(h, r.val_total);
  }
  return h;
}

std::uint64_t hash_store(const RehearsalStore& store) {
  std::uint64_t h = fnv1a("store");
  hash_u64(h, store.cap_strong);
  hash_u64(h, store.cap_weak);
  for (const auto* buf : {&store.strong, &store.weak}) {
    hash_u64(h, buf->size());
    for (const StoreEntry& e : *buf) {
      hash_u64(h, e.clip_index);
      hash_u64(h, static_cast<std::uint64_t>(e.class_id));
      hash_double(h, e.exposure_seconds);
    }
  }
  hash_u64(h, store.ledger.size());
  for (const auto& [cls, sec] : store.ledger) {
    hash_u64(h, static_cast<std::uint64_t>(cls));
    hash_double(h, sec);
  }
  return h;
}

std::uint64_t hash_fisher(const FisherDiagonal& fisher) {
  std::uint64_t h = fnv1a("fisher");
  hash_u64(h, fisher.f.size());
  for (const Tensor& t : fisher.f) hash_tensor(h, t);
  return h;
}

std::uint64_t hash_snapshot(const SnapshotScores& snap) {
  std::uint64_t h = fnv1a("snap");
  hash_u64(h, snap.task_index);
  hash_u64(h, snap.classes.size());
  for (std::int32_t c : snap.classes) hash_u64(h, static_cast<std::uint64_t>(c));
  for (double f : snap.class_seg_f1) hash_double(h, f);
  return h;
}

// --- held-out evaluation ---

Tensor sigmoid_probs(const Tensor& logits) {
  Tensor p = logits;
  for (double& v : p.data) v = 1.0 / (1.0 + std::exp(-v));
  return p;
}

struct EvalPack {
  std::vector<Tensor> probs;   // per clip, T x |C| in model class order
  std::vector<Tensor> labels;  // same shape, seen classes only
};

// Snapshot protocol: a partially-trained model is scored on the seen
// universe, so clips carrying events of classes it has never observed are
// excluded. The final pass sees every class and keeps the whole corpus.
std::vector<std::size_t> seen_clips(const Dataset& ev, const std::vector<std::int32_t>& seen) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ev.clips.size(); ++i) {
    bool ok = true;
    for (const Event& e : ev.clips[i].events) {
      ok = ok && std::find(seen.begin(), seen.end(), e.class_id) != seen.end();
    }
    if (ok) keep.push_back(i);
  }
  return keep;
}

EvalPack eval_forward(const SedModel& model, const Dataset& ev,
                      const std::vector<std::size_t>& clip_indices) {
  EvalPack pack;
  pack.probs.reserve(clip_indices.size());
  pack.labels.reserve(clip_indices.size());
  for (std::size_t i : clip_indices) {
    pack.probs.push_back(sigmoid_probs(forward(model, ev.features[i]).logits));
    pack.labels.push_back(rasterize_targets(ev.clips[i], ev.frame_count, model.class_order,
                                            model.class_order));
  }
  return pack;
}

SegmentCounts segment_counts(const EvalPack& pack, double hop) {
  SegmentCounts counts;
  for (std::size_t i = 0; i < pack.probs.size(); ++i) {
    accumulate_segments(pack.probs[i], pack.labels[i], kSegThreshold, hop, kSegmentSeconds,
                        counts);
  }
  return counts;
}

double psds_eval(const EvalPack& pack, const SedModel& model, const Dataset& ev,
                 const std::vector<std::size_t>& clip_indices, const PsdsConfig& pcfg) {
  std::vector<DetectedEvent> gt;
  double total_seconds = 0.0;
  for (std::size_t i : clip_indices) {
    total_seconds += ev.clips[i].duration;
    for (const Event& e : ev.clips[i].events) {
      gt.push_back({ev.clips[i].clip_id, e.class_id, e.onset, e.offset});
    }
  }
  const double hop = ev.hop_seconds();
  std::vector<MatchCounts> per_threshold;
  per_threshold.reserve(pcfg.thresholds.size());
  for (double th : pcfg.thresholds) {
    std::vector<DetectedEvent> dets;
    for (std::size_t k = 0; k < clip_indices.size(); ++k) {
      auto clip_dets = decode_events(pack.probs[k], th, kMedianWidth, hop,
                                     ev.clips[clip_indices[k]].clip_id, model.class_order);
      dets.insert(dets.end(), clip_dets.begin(), clip_dets.end());
    }
    per_threshold.push_back(intersection_match(dets, gt, pcfg));
  }
  return psds_score(per_threshold, pcfg, total_seconds / 3600.0, model.class_order);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_hash(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RunReport rep;
  rep.method = cfg.method;
  rep.task_mode = cfg.task_mode;
  rep.cap_strong = cfg.cap_strong;
  rep.cap_weak = cfg.cap_weak;
  rep.fd = cfg.fd;
  rep.ul = cfg.ul;
  rep.mu = cfg.mu;
  rep.seed = seed;
  auto stage = [&rep](std::string name, std::uint64_t h) {
    rep.stages.push_back({std::move(name), h});
  };

  Dataset data = synth_dataset(cfg.synth);
  SynthSpec espec = cfg.synth;
  espec.n_strong = cfg.eval_strong;
  espec.n_weak = 0;
  espec.n_unlabeled = 0;
  espec.seed = derive_seed(cfg.synth.seed, "eval");
  Dataset eval_data = synth_dataset(espec);
  stage("corpus", hash_dataset(eval_data, hash_dataset(data)));

  std::vector<TaskSpec> tasks;
  if (cfg.method == Method::Joint) {
    TaskSpec all;
    for (std::size_t c = 0; c < data.class_names.size(); ++c) {
      all.class_ids.push_back(static_cast<std::int32_t>(c));
    }
    tasks.push_back(std::move(all));
  } else {
    tasks = split_tasks(data.class_names, cfg.task_mode, seed);
  }
  stage("split", hash_tasks(tasks));

  const bool uses_store = cfg.method == Method::Ucil || cfg.method == Method::Nr ||
                          cfg.method == Method::Ewc || cfg.method == Method::Lwf;
  SedModel student, prev;
  RehearsalStore store;
  store.cap_strong = cfg.cap_strong;
  store.cap_weak = cfg.cap_weak;
  FisherDiagonal fisher;
  SedModel anchor;
  bool have_fisher = false;
  std::vector<std::int32_t> seen;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string si = std::to_string(i);
    const TaskSpec& task = tasks[i];
    const TaskData part = partition_task(data, task, derive_seed(seed, "part/" + si));
    stage("part/" + si, hash_partition(part));

    if (i == 0) {
      student = init_model(cfg.model, derive_seed(seed, "init"), task.class_ids);
    } else {
      prev = snapshot(student);
      expand_heads(student, task.class_ids, derive_seed(seed, "expand/" + si));
    }
    stage("model/" + si, hash_model(student));

    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(seed, "train/" + si);
    TaskContext ctx;
    ctx.data = &data;
    ctx.part = &part;
    ctx.new_classes = task.class_ids;
    switch (cfg.method) {
      case Method::Ucil:
        tcfg.fd = cfg.fd;
        tcfg.od = true;
        tcfg.uod = cfg.ul;
        tcfg.od_rehearsal = true;
        if (i > 0) {
          ctx.snap = &prev;
          ctx.store = &store;
        }
        break;
      case Method::Finetune:
      case Method::Joint:
        tcfg.indl = false;
        tcfg.fd = tcfg.od = tcfg.uod = false;
        break;
      case Method::Nr:
        tcfg.indl = false;
        tcfg.fd = tcfg.od = tcfg.uod = false;
        if (i > 0) ctx.store = &store;
        break;
      case Method::Ewc:
        tcfg.indl = false;
        tcfg.fd = tcfg.od = tcfg.uod = false;
        if (i > 0) ctx.store = &store;
        if (have_fisher) {
          ctx.fisher = &fisher;
          ctx.anchor = &anchor;
        }
        break;
      case Method::Lwf:
        tcfg.fd = false;
        tcfg.od = true;
        tcfg.uod = false;
        tcfg.od_rehearsal = false;
        tcfg.lambda_override = 1.0;
        if (i > 0) {
          ctx.snap = &prev;
          ctx.store = &store;
        }
        break;
    }

    TrainResult res = train_task(student, ctx, tcfg);
    student = std::move(res.model);
    stage("train/" + si, hash_train(student, res.teacher, res.log));
    rep.task_logs.push_back(std::move(res.log));
    for (std::int32_t c : task.class_ids) seen.push_back(c);

    SnapshotScores snap;
    snap.task_index = i;
    snap.classes = student.class_order;
    const EvalPack pack = eval_forward(student, eval_data, seen_clips(eval_data, seen));
    const SegmentCounts counts = segment_counts(pack, eval_data.hop_seconds());
    for (std::size_t j = 0; j < student.class_order.size(); ++j) {
      snap.class_seg_f1.push_back(macro_f1(counts, {j}));
    }
    stage("snap/" + si, hash_snapshot(snap));
    rep.snapshots.push_back(std::move(snap));

    if (uses_store) {
      const std::uint64_t mseed = derive_seed(seed, "mem/" + si);
      store = cfg.method == Method::Ucil && cfg.mu ? update_memory(store, data, part, seen, mseed)
                                                   : nr_update(store, data, part, mseed);
      stage("mem/" + si, hash_store(store));
    }
    if (cfg.method == Method::Ewc) {
      anchor = snapshot(student);
      std::vector<std::size_t> pool = part.strong;
      pool.insert(pool.end(), part.weak.begin(), part.weak.end());
      fisher = estimate_fisher(student, data, pool, cfg.fisher_samples,
                               derive_seed(seed, "fisher/" + si));
      have_fisher = true;
      stage("fisher/" + si, hash_fisher(fisher));
    }
  }

  std::vector<std::size_t> all_clips(eval_data.clips.size());
  for (std::size_t i = 0; i < all_clips.size(); ++i) all_clips[i] = i;
  const EvalPack pack = eval_forward(student, eval_data, all_clips);
  const SegmentCounts counts = segment_counts(pack, eval_data.hop_seconds());
  std::vector<std::size_t> all_cols(student.class_order.size());
  for (std::size_t j = 0; j < all_cols.size(); ++j) all_cols[j] = j;
  rep.seg_f1 = macro_f1(counts, all_cols);
  rep.psds1 = psds_eval(pack, student, eval_data, all_clips, psds1_like());
  rep.psds2 = psds_eval(pack, student, eval_data, all_clips, psds2_like());
  std::uint64_t eh = fnv1a("eval");
  hash_double(eh, rep.psds1);
  hash_double(eh, rep.psds2);
  hash_double(eh, rep.seg_f1);
  stage("eval", eh);
  return rep;
}

std::string format_report(const RunReport& rep) {
  std::ostringstream os;
  os << "# ucil-report v1\n";
  os << "method " << method_name(rep.method) << "\n";
  os << "task_mode " << task_mode_name(rep.task_mode) << "\n";
  os << "cap_strong " << rep.cap_strong << "\n";
  os << "cap_weak " << rep.cap_weak << "\n";
  os << "fd " << (rep.fd ? "on" : "off") << "\n";
  os << "ul " << (rep.ul ? "on" : "off") << "\n";
  os << "mu " << (rep.mu ? "on" : "off") << "\n";
  os << "seed " << rep.seed << "\n";
  os << "psds1 " << fmt_double(rep.psds1) << "\n";
  os << "psds2 " << fmt_double(rep.psds2) << "\n";
  os << "seg_f1 " << fmt_double(rep.seg_f1) << "\n";
  os << "stages " << rep.stages.size() << "\n";
  for (const StageHash& s : rep.stages) os << "stage " << s.name << " " << fmt_hash(s.hash) << "\n";
  os << "snapshots " << rep.snapshots.size() << "\n";
  for (const SnapshotScores& s : rep.snapshots) {
    os << "snapshot " << s.task_index << "\nclasses";
    for (std::int32_t c : s.classes) os << " " << c;
    os << "\nclass_seg_f1";
    for (double f : s.class_seg_f1) os << " " << fmt_double(f);
    os << "\n";
  }
  os << "task_logs " << rep.task_logs.size() << "\n";
  for (std::size_t i = 0; i < rep.task_logs.size(); ++i) {
    os << "task_log " << i << " " << rep.task_logs[i].size() << "\n";
    for (const EpochRecord& r : rep.task_logs[i]) os << format_log_line(r) << "\n";
  }
  return os.str();
}

void write_report(const RunReport& rep, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << format_report(rep);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 != 0 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

MatrixRow summarize_runs(const ExperimentConfig& cfg, const std::vector<RunReport>& runs,
                         std::size_t n_failed, const std::string& error) {
  MatrixRow row;
  row.method = cfg.method;
  row.task_mode = cfg.task_mode;
  row.cap_strong = cfg.cap_strong;
  row.cap_weak = cfg.cap_weak;
  row.fd = cfg.fd;
  row.ul = cfg.ul;
  row.mu = cfg.mu;
  row.n_ok = runs.size();
  row.n_failed = n_failed;
  row.error = error;
  if (!runs.empty()) {
    std::vector<double> p1, p2, f1;
    for (const RunReport& r : runs) {
      p1.push_back(r.psds1);
      p2.push_back(r.psds2);
      f1.push_back(r.seg_f1);
    }
    row.psds1 = median(std::move(p1));
    row.psds2 = median(std::move(p2));
    row.seg_f1 = median(std::move(f1));
  }
  return row;
}

std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw std::invalid_argument("run_matrix: no configurations");
  for (const ExperimentConfig& cfg : configs) cfg.validate();
  std::vector<MatrixRow> rows;
  rows.reserve(configs.size());
  for (const ExperimentConfig& cfg : configs) {
    std::vector<RunReport> runs;
    std::size_t n_failed = 0;
    std::string error;
    for (std::uint64_t seed : cfg.seeds) {
      try {
        runs.push_back(run_experiment(cfg, seed));
      } catch (const std::exception& e) {
        ++n_failed;
        if (error.empty()) error = "seed " + std::to_string(seed) + ": " + e.what();
      }
    }
    rows.push_back(summarize_runs(cfg, runs, n_failed, error));
  }
  return rows;
}

std::string format_matrix(const std::vector<MatrixRow>& rows) {
  std::ostringstream os;
  os << "method\ttask_mode\tcap_strong\tcap_weak\tfd\tul\tmu\tseeds_ok\tseeds_failed"
     << "\tpsds1\tpsds2\tseg_f1\tnote\n";
  for (const MatrixRow& r : rows) {
    os << method_name(r.method) << "\t" << task_mode_name(r.task_mode) << "\t" << r.cap_strong
       << "\t" << r.cap_weak << "\t" << (r.fd ? "on" : "off") << "\t" << (r.ul ? "on" : "off")
       << "\t" << (r.mu ? "on" : "off") << "\t" << r.n_ok << "\t" << r.n_failed << "\t";
    if (r.n_ok > 0) {
      os << fmt_double(r.psds1) << "\t" << fmt_double(r.psds2) << "\t" << fmt_double(r.seg_f1);
    } else {
      os << "-\t-\t-";
    }
    os << "\t" << r.error << "\n";
  }
  return os.str();
}

void emit_plotdata(const RunReport& rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < rep.task_logs.size(); ++i) {
    write_log(rep.task_logs[i], dir + "/loss_task" + std::to_string(i) + ".tsv");
  }
}

void emit_capacity_series(const std::vector<MatrixRow>& rows, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write series: " + path);
  os << "cap_strong\tcap_weak\tpsds1\tpsds2\tseg_f1\n";
  for (const MatrixRow& r : rows) {
    if (r.n_ok == 0) continue;
    os << r.cap_strong << "\t" << r.cap_weak << "\t" << fmt_double(r.psds1) << "\t"
       << fmt_double(r.psds2) << "\t" << fmt_double(r.seg_f1) << "\n";
  }
}

}  // namespace ucil
