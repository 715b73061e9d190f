#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ucil/dataset.hpp"

namespace ucil {

struct StoreEntry {
  std::size_t clip_index = 0;      // into the dataset
  std::int32_t class_id = -1;      // the clip's dominant (longest-exposure) class
  double exposure_seconds = 0.0;   // that class's exposure within this clip
};

// Capacity-bounded exemplar buffers, one per labeled stream, plus the
// per-class exposure ledger recomputed from the stored clips.
struct RehearsalStore {
  std::size_t cap_strong = 0;
  std::size_t cap_weak = 0;
  std::vector<StoreEntry> strong, weak;
  std::map<std::int32_t, double> ledger;
};

// Per class, summed event seconds. Errors when an event ends before it starts.
std::map<std::int32_t, double> event_durations(const std::vector<Event>& events);

// Each clip-level label counts as 10 seconds.
std::map<std::int32_t, double> weak_durations(const std::vector<std::int32_t>& labels);

// Exposure of every labeled class within one clip (empty for unlabeled).
std::map<std::int32_t, double> clip_exposure(const ClipRecord& clip);

// Class-balanced rebalance over the union of current exemplars and the task's
// labeled clips: per-buffer quotas floor(capacity/|seen|), leftover slots to
// the least-exposed classes, seeded uniform sampling within each class.
RehearsalStore update_memory(const RehearsalStore& store, const Dataset& data,
                             const TaskData& task, const std::vector<std::int32_t>& seen,
                             std::uint64_t seed);

// Naive rehearsal: uniform fill from the same union, no class balancing.
RehearsalStore nr_update(const RehearsalStore& store, const Dataset& data, const TaskData& task,
                         std::uint64_t seed);

struct RehearsalBatch {
  std::vector<std::size_t> strong, weak;  // clip indices, in draw order
};

// Seeded draw without replacement from each buffer. Errors when oversized.
RehearsalBatch draw_rehearsal(const RehearsalStore& store, std::size_t n_strong,
                              std::size_t n_weak, std::uint64_t seed);

// Text manifest, one stored clip per record: buffer,class,clip_id,exposure_seconds.
void save_store(const RehearsalStore& store, const Dataset& data, const std::string& path);
RehearsalStore load_store(const std::string& path, const Dataset& data);

}  // namespace ucil
