#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ucil/tensor.hpp"

namespace ucil {

enum class AnnotationKind { Strong, Weak, Unlabeled };

struct Event {
  std::int32_t class_id = -1;
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds
};

struct ClipRecord {
  std::string clip_id;
  AnnotationKind kind = AnnotationKind::Unlabeled;
  std::vector<Event> events;               // strong only
  std::vector<std::int32_t> weak_labels;   // weak only
  double duration = 10.0;                  // seconds
  std::string feature_path;                // relative to the manifest directory
};

// In-memory corpus: records plus their feature matrices, index-aligned.
struct Dataset {
  std::vector<std::string> class_names;  // position = class id
  std::vector<ClipRecord> clips;
  std::vector<Tensor> features;          // each T x F
  std::size_t frame_count = 0;
  std::size_t n_mels = 0;

  double hop_seconds() const;
  std::size_t index_of(const std::string& clip_id) const;  // error if absent
};

// --- synthetic corpus ---

struct SynthSpec {
  std::size_t n_classes = 6;
  std::size_t n_strong = 600;
  std::size_t n_weak = 300;
  std::size_t n_unlabeled = 1200;
  std::size_t frame_count = 156;
  std::size_t n_mels = 64;
  std::uint64_t seed = 0;
  std::vector<double> class_weights;  // clip-class proportions; empty = uniform
  double pair_rate = 0.25;            // fraction of clips holding two classes
};

struct ClassBand {
  std::size_t lo, hi;  // [lo, hi) mel bins
};

// Mel span a class prototype paints; neighboring classes overlap by half.
ClassBand class_band(std::size_t class_id, std::size_t n_classes, std::size_t n_mels);

// Band-limited class prototypes over a noise floor; events are frame-aligned
// with known onsets/offsets; deterministic per seed.
Dataset synth_dataset(const SynthSpec& spec);

// --- log-mel features for real audio ingestion ---

Tensor logmel(const std::vector<double>& waveform, double sample_rate, std::size_t window,
              std::size_t hop, std::size_t n_mels);

// --- task splitting ---

enum class TaskMode { TwoTask, FourTask };

struct TaskSpec {
  std::size_t task_index = 0;
  std::vector<std::int32_t> class_ids;
};

// two_task: seeded half/half class split. four_task: the fixed DCASE groups,
// group order shuffled by seed (errors when the class names differ).
std::vector<TaskSpec> split_tasks(const std::vector<std::string>& class_names, TaskMode mode,
                                  std::uint64_t seed);

// Clip indices for one task: labeled streams hold clips with at least one
// label among the task's classes; the unlabeled pool is shared by every task.
struct TaskData {
  std::vector<std::size_t> strong, weak, unlabeled;
  std::vector<std::size_t> val_strong, val_weak;  // held-out 10%
};

TaskData partition_task(const Dataset& data, const TaskSpec& task, std::uint64_t seed);

// Frame-level multi-hot targets in model class order. Only classes in
// `allowed` contribute; weak labels activate every frame of their column.
Tensor rasterize_targets(const ClipRecord& clip, std::size_t frame_count,
                         const std::vector<std::int32_t>& model_order,
                         const std::vector<std::int32_t>& allowed);

// --- persistence ---

void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path);

void write_features(const Tensor& feats, const std::string& path);
Tensor read_features(const std::string& path);

// Ground truth for the evaluation interchange format, strong clips only.
void write_ground_truth(const Dataset& data, const std::vector<std::size_t>& clip_indices,
                        const std::string& path);

}  // namespace ucil
