#include "ucil/memory.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ucil/rng.hpp"

namespace ucil {

std::map<std::int32_t, double> event_durations(const std::vector<Event>& events) {
  std::map<std::int32_t, double> out;
  for (const Event& e : events) {
    if (e.offset < e.onset) {
      throw std::invalid_argument("event_durations: event ends before it starts");
    }
    out[e.class_id] += e.offset - e.onset;
  }
  return out;
}

std::map<std::int32_t, double> weak_durations(const std::vector<std::int32_t>& labels) {
  std::map<std::int32_t, double> out;
  for (std::int32_t c : labels) out[c] += 10.0;
  return out;
}

std::map<std::int32_t, double> clip_exposure(const ClipRecord& clip) {
  switch (clip.kind) {
    case AnnotationKind::Strong: return event_durations(clip.events);
    case AnnotationKind::Weak: return weak_durations(clip.weak_labels);
    case AnnotationKind::Unlabeled: return {};
  }
  return {};
}

namespace {

// Dominant class within a clip among `allowed` (empty allowed = all labels);
// ties resolve to the smallest class id.
StoreEntry attribute(const Dataset& data, std::size_t clip_index,
                     const std::set<std::int32_t>& allowed) {
  const std::map<std::int32_t, double> exp = clip_exposure(data.clips[clip_index]);
  StoreEntry entry;
  entry.clip_index = clip_index;
  for (const auto& [c, seconds] : exp) {
    if (!allowed.empty() && !allowed.count(c)) continue;
    if (entry.class_id < 0 || seconds > entry.exposure_seconds) {
      entry.class_id = c;
      entry.exposure_seconds = seconds;
    }
  }
  return entry;
}

std::vector<std::size_t> union_pool(const std::vector<StoreEntry>& previous,
                                    const std::vector<std::size_t>& incoming) {
  std::set<std::size_t> pool;
  for (const StoreEntry& e : previous) pool.insert(e.clip_index);
  pool.insert(incoming.begin(), incoming.end());
  return {pool.begin(), pool.end()};
}

std::vector<StoreEntry> balanced_fill(const Dataset& data, const std::vector<std::size_t>& pool,
                                      const std::vector<std::int32_t>& seen, std::size_t cap,
                                      Rng& rng) {
  if (cap == 0 || seen.empty()) return {};
  const std::set<std::int32_t> allowed(seen.begin(), seen.end());
  std::map<std::int32_t, std::vector<StoreEntry>> by_class;
  for (std::int32_t c : seen) by_class[c];  // quota slot even with no clips
  for (std::size_t i : pool) {
    const StoreEntry entry = attribute(data, i, allowed);
    if (entry.class_id >= 0) by_class[entry.class_id].push_back(entry);
  }
  const std::size_t quota = cap / seen.size();
  std::map<std::int32_t, std::vector<StoreEntry>> picked;
  std::map<std::int32_t, std::size_t> cursor;
  std::map<std::int32_t, double> exposure;
  std::size_t taken = 0;
  for (auto& [c, clips] : by_class) {
    rng.shuffle(clips);
    const std::size_t n = std::min(quota, clips.size());
    picked[c].assign(clips.begin(), clips.begin() + static_cast<std::ptrdiff_t>(n));
    cursor[c] = n;
    exposure[c] = 0.0;
    for (const StoreEntry& e : picked[c]) exposure[c] += e.exposure_seconds;
    taken += n;
  }
  // grant leftover slots one at a time to the least-exposed class that still
  // has unsampled clips
  while (taken < cap) {
    std::int32_t best = -1;
    for (const auto& [c, clips] : by_class) {
      if (cursor[c] >= clips.size()) continue;
      if (best < 0 || exposure[c] < exposure[best]) best = c;
    }
    if (best < 0) break;
    const StoreEntry& e = by_class[best][cursor[best]++];
    picked[best].push_back(e);
    exposure[best] += e.exposure_seconds;
    ++taken;
  }
  std::vector<StoreEntry> out;
  for (const auto& [c, entries] : picked) {
    out.insert(out.end(), entries.begin(), entries.end());
  }
  return out;
}

std::vector<StoreEntry> uniform_fill(const Dataset& data, const std::vector<std::size_t>& pool,
                                     std::size_t cap, Rng& rng) {
  std::vector<StoreEntry> out;
  const std::set<std::int32_t> all;  // attribute over every label
  if (pool.size() <= cap) {
    for (std::size_t i : pool) out.push_back(attribute(data, i, all));
    return out;
  }
  for (std::size_t k : rng.sample_without_replacement(pool.size(), cap)) {
    out.push_back(attribute(data, pool[k], all));
  }
  return out;
}

void recompute_ledger(RehearsalStore& store) {
  store.ledger.clear();
  for (const StoreEntry& e : store.strong) store.ledger[e.class_id] += e.exposure_seconds;
  for (const StoreEntry& e : store.weak) store.ledger[e.class_id] += e.exposure_seconds;
}

}  // namespace

RehearsalStore update_memory(const RehearsalStore& store, const Dataset& data,
                             const TaskData& task, const std::vector<std::int32_t>& seen,
                             std::uint64_t seed) {
  RehearsalStore out;
  out.cap_strong = store.cap_strong;
  out.cap_weak = store.cap_weak;
  Rng rng_s(derive_seed(seed, "memory/strong"));
  Rng rng_w(derive_seed(seed, "memory/weak"));
  out.strong = balanced_fill(data, union_pool(store.strong, task.strong), seen, store.cap_strong,
                             rng_s);
  out.weak = balanced_fill(data, union_pool(store.weak, task.weak), seen, store.cap_weak, rng_w);
  recompute_ledger(out);
  return out;
}

RehearsalStore nr_update(const RehearsalStore& store, const Dataset& data, const TaskData& task,
                         std::uint64_t seed) {
  RehearsalStore out;
  out.cap_strong = store.cap_strong;
  out.cap_weak = store.cap_weak;
  Rng rng_s(derive_seed(seed, "nr/strong"));
  Rng rng_w(derive_seed(seed, "nr/weak"));
  out.strong = uniform_fill(data, union_pool(store.strong, task.strong), store.cap_strong, rng_s);
  out.weak = uniform_fill(data, union_pool(store.weak, task.weak), store.cap_weak, rng_w);
  recompute_ledger(out);
  return out;
}

RehearsalBatch draw_rehearsal(const RehearsalStore& store, std::size_t n_strong,
                              std::size_t n_weak, std::uint64_t seed) {
  if (n_strong > store.strong.size() || n_weak > store.weak.size()) {
    throw std::invalid_argument("draw_rehearsal: request exceeds buffer size (" +
                                std::to_string(n_strong) + "/" +
                                std::to_string(store.strong.size()) + " strong, " +
                                std::to_string(n_weak) + "/" + std::to_string(store.weak.size()) +
                                " weak)");
  }
  Rng rng(derive_seed(seed, "rehearsal_draw"));
  RehearsalBatch batch;
  for (std::size_t k : rng.sample_without_replacement(store.strong.size(), n_strong)) {
    batch.strong.push_back(store.strong[k].clip_index);
  }
  for (std::size_t k : rng.sample_without_replacement(store.weak.size(), n_weak)) {
    batch.weak.push_back(store.weak[k].clip_index);
  }
  return batch;
}

void save_store(const RehearsalStore& store, const Dataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_store: cannot open " + path);
  os << "#ucil-store v1\n";
  os << "#capacity " << store.cap_strong << "," << store.cap_weak << "\n";
  auto dump = [&](const char* buffer, const std::vector<StoreEntry>& entries) {
    for (const StoreEntry& e : entries) {
      char exp[40];
      std::snprintf(exp, sizeof exp, "%.17g", e.exposure_seconds);
      os << buffer << "," << e.class_id << "," << data.clips[e.clip_index].clip_id << "," << exp
         << "\n";
    }
  };
  dump("strong", store.strong);
  dump("weak", store.weak);
}

RehearsalStore load_store(const std::string& path, const Dataset& data) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_store: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "#ucil-store v1") {
    throw std::runtime_error("load_store: missing store header");
  }
  RehearsalStore store;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("#capacity ", 0) == 0) {
      std::istringstream ss(line.substr(10));
      char sep = 0;
      ss >> store.cap_strong >> sep >> store.cap_weak;
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 4) throw std::runtime_error("load_store: malformed record '" + line + "'");
    StoreEntry e;
    e.clip_index = data.index_of(fields[2]);
    e.class_id = std::stoi(fields[1]);
    e.exposure_seconds = std::stod(fields[3]);
    (fields[0] == "strong" ? store.strong : store.weak).push_back(e);
  }
  recompute_ledger(store);
  return store;
}

}  // namespace ucil
