#include "ucil/memory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "ucil/rng.hpp"

using namespace ucil;

namespace {

ClipRecord strong_clip(const std::string& id, std::vector<Event> events) {
  ClipRecord c;
  c.clip_id = id;
  c.kind = AnnotationKind::Strong;
  c.events = std::move(events);
  return c;
}

ClipRecord weak_clip(const std::string& id, std::vector<std::int32_t> labels) {
  ClipRecord c;
  c.clip_id = id;
  c.kind = AnnotationKind::Weak;
  c.weak_labels = std::move(labels);
  return c;
}

Dataset tiny_dataset(std::vector<ClipRecord> clips, std::size_t n_classes) {
  Dataset d;
  for (std::size_t i = 0; i < n_classes; ++i) d.class_names.push_back("c" + std::to_string(i));
  d.frame_count = 4;
  d.n_mels = 2;
  for (ClipRecord& c : clips) {
    c.feature_path = "features/" + c.clip_id + ".fea";
    d.clips.push_back(std::move(c));
    d.features.emplace_back(std::vector<std::size_t>{4, 2});
  }
  return d;
}

std::map<std::int32_t, std::size_t> class_counts(const std::vector<StoreEntry>& entries) {
  std::map<std::int32_t, std::size_t> counts;
  for (const StoreEntry& e : entries) ++counts[e.class_id];
  return counts;
}

}  // namespace

TEST_CASE("event durations sum per class") {
  std::map<std::int32_t, double> d = event_durations({{0, 0.5, 2.0}, {0, 3.0, 4.0}});
  CHECK(d.size() == 1);
  CHECK(d[0] == 2.5);

  CHECK(event_durations({}).empty());

  d = event_durations({{1, 2.0, 2.0}, {1, 5.0, 6.0}});
  CHECK(d[1] == 1.0);  // zero-length event contributes nothing

  CHECK_THROWS_AS(event_durations({{0, 3.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("weak labels count ten seconds each") {
  std::map<std::int32_t, double> d = weak_durations({2, 7});
  CHECK(d[2] == 10.0);
  CHECK(d[7] == 10.0);
  CHECK(weak_durations({}).empty());

  // additivity across clips
  std::map<std::int32_t, double> total;
  for (const auto& [c, s] : weak_durations({4})) total[c] += s;
  for (const auto& [c, s] : weak_durations({4})) total[c] += s;
  CHECK(total[4] == 20.0);
}

TEST_CASE("ample pool splits capacity evenly across classes") {
  std::vector<ClipRecord> clips;
  for (int i = 0; i < 8; ++i) {
    clips.push_back(strong_clip("s" + std::to_string(i), {{i % 2, 1.0, 3.0}}));
  }
  const Dataset data = tiny_dataset(std::move(clips), 2);
  TaskData task;
  for (std::size_t i = 0; i < 8; ++i) task.strong.push_back(i);

  RehearsalStore store;
  store.cap_strong = 4;
  const RehearsalStore out = update_memory(store, data, task, {0, 1}, 7);
  CHECK(out.strong.size() == 4);
  CHECK(out.weak.empty());
  auto counts = class_counts(out.strong);
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  CHECK(out.ledger.at(0) == 4.0);  // 2 clips x 2 s
  CHECK(out.ledger.at(1) == 4.0);
}

TEST_CASE("surplus slots flow to the least-exposed classes") {
  // quota would be 3 each, but class 0 owns a single clip
  std::vector<ClipRecord> clips;
  clips.push_back(strong_clip("a", {{0, 0.0, 2.0}}));
  for (int i = 0; i < 4; ++i) {
    clips.push_back(strong_clip("b" + std::to_string(i), {{1, 0.0, 1.0}}));
  }
  Dataset data = tiny_dataset(std::move(clips), 2);
  TaskData task;
  for (std::size_t i = 0; i < 5; ++i) task.strong.push_back(i);

  RehearsalStore store;
  store.cap_strong = 6;
  RehearsalStore out = update_memory(store, data, task, {0, 1}, 3);
  auto counts = class_counts(out.strong);
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 4);  // its whole pool, soaked up the surplus
  CHECK(out.strong.size() == 5);

  // three classes: the leftover slot goes to the least-exposed candidate class
  clips.clear();
  clips.push_back(strong_clip("a", {{0, 0.0, 2.0}}));
  for (int i = 0; i < 4; ++i) {
    clips.push_back(strong_clip("b" + std::to_string(i), {{1, 0.0, 1.0}}));
  }
  for (int i = 0; i < 4; ++i) {
    clips.push_back(strong_clip("c" + std::to_string(i), {{2, 0.0, 5.0}}));
  }
  data = tiny_dataset(std::move(clips), 3);
  task.strong.clear();
  for (std::size_t i = 0; i < 9; ++i) task.strong.push_back(i);
  store.cap_strong = 6;
  out = update_memory(store, data, task, {0, 1, 2}, 3);
  counts = class_counts(out.strong);
  CHECK(counts[0] == 1);  // exhausted at quota time
  CHECK(counts[1] == 3);  // 2 s stored vs class 2's 10 s: gets the spare slot
  CHECK(counts[2] == 2);
}

TEST_CASE("updates respect capacity and cover every class across a task sequence") {
  SynthSpec spec;
  spec.n_strong = 120;
  spec.n_weak = 60;
  spec.n_unlabeled = 0;
  spec.seed = 3;
  const Dataset data = synth_dataset(spec);
  const auto tasks = split_tasks(data.class_names, TaskMode::TwoTask, 3);

  RehearsalStore store;
  store.cap_strong = 30;
  store.cap_weak = 12;
  std::vector<std::int32_t> seen;
  for (const TaskSpec& task : tasks) {
    seen.insert(seen.end(), task.class_ids.begin(), task.class_ids.end());
    const TaskData part = partition_task(data, task, 3);
    store = update_memory(store, data, part, seen, 3);

    CHECK(store.strong.size() <= 30);
    CHECK(store.weak.size() <= 12);
    auto counts = class_counts(store.strong);
    for (std::int32_t c : seen) CHECK(counts[c] >= 1);

    // balanced: within +-1 of capacity / |seen| on this ample pool
    const double target_s = 30.0 / double(seen.size());
    for (std::int32_t c : seen) {
      CHECK(std::abs(double(counts[c]) - target_s) <= 1.0);
    }
    auto weak_counts = class_counts(store.weak);
    const double target_w = 12.0 / double(seen.size());
    for (std::int32_t c : seen) {
      CHECK(std::abs(double(weak_counts[c]) - target_w) <= 1.0);
    }
  }

  // ledger matches a recount over the final store
  std::map<std::int32_t, double> want;
  for (const StoreEntry& e : store.strong) want[e.class_id] += e.exposure_seconds;
  for (const StoreEntry& e : store.weak) want[e.class_id] += e.exposure_seconds;
  CHECK(store.ledger == want);
}

TEST_CASE("shrinking capacity never grows a class count") {
  SynthSpec spec;
  spec.n_strong = 120;
  spec.n_weak = 60;
  spec.n_unlabeled = 0;
  spec.seed = 12;
  const Dataset data = synth_dataset(spec);
  TaskData task;
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    if (data.clips[i].kind == AnnotationKind::Strong) task.strong.push_back(i);
    if (data.clips[i].kind == AnnotationKind::Weak) task.weak.push_back(i);
  }
  std::vector<std::int32_t> seen = {0, 1, 2, 3, 4, 5};

  RehearsalStore big;
  big.cap_strong = 24;
  big.cap_weak = 12;
  big = update_memory(big, data, task, seen, 5);

  RehearsalStore shrunk = big;
  shrunk.cap_strong = 12;
  shrunk.cap_weak = 6;
  shrunk = update_memory(shrunk, data, task, seen, 5);

  auto before_s = class_counts(big.strong), after_s = class_counts(shrunk.strong);
  auto before_w = class_counts(big.weak), after_w = class_counts(shrunk.weak);
  for (std::int32_t c : seen) {
    CHECK(after_s[c] <= before_s[c]);
    CHECK(after_w[c] <= before_w[c]);
  }
}

TEST_CASE("memory update is a pure function of its inputs") {
  SynthSpec spec;
  spec.n_strong = 40;
  spec.n_weak = 20;
  spec.n_unlabeled = 0;
  spec.seed = 8;
  const Dataset data = synth_dataset(spec);
  TaskData task;
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    if (data.clips[i].kind == AnnotationKind::Strong) task.strong.push_back(i);
    if (data.clips[i].kind == AnnotationKind::Weak) task.weak.push_back(i);
  }
  RehearsalStore store;
  store.cap_strong = 12;
  store.cap_weak = 6;
  const RehearsalStore a = update_memory(store, data, task, {0, 1, 2, 3, 4, 5}, 21);
  const RehearsalStore b = update_memory(store, data, task, {0, 1, 2, 3, 4, 5}, 21);
  REQUIRE(a.strong.size() == b.strong.size());
  for (std::size_t i = 0; i < a.strong.size(); ++i) {
    CHECK(a.strong[i].clip_index == b.strong[i].clip_index);
    CHECK(a.strong[i].class_id == b.strong[i].class_id);
    CHECK(a.strong[i].exposure_seconds == b.strong[i].exposure_seconds);
  }
  CHECK(a.ledger == b.ledger);

  const RehearsalStore c = update_memory(store, data, task, {0, 1, 2, 3, 4, 5}, 22);
  bool differs = false;
  for (std::size_t i = 0; i < a.strong.size() && !differs; ++i) {
    differs = a.strong[i].clip_index != c.strong[i].clip_index;
  }
  CHECK(differs);
}

TEST_CASE("zero capacity yields an empty store without error") {
  std::vector<ClipRecord> clips = {strong_clip("a", {{0, 0.0, 1.0}})};
  const Dataset data = tiny_dataset(std::move(clips), 1);
  TaskData task;
  task.strong = {0};
  RehearsalStore store;  // caps 0,0
  const RehearsalStore out = update_memory(store, data, task, {0}, 1);
  CHECK(out.strong.empty());
  CHECK(out.weak.empty());
  CHECK(out.ledger.empty());
}

TEST_CASE("naive rehearsal keeps the pool when capacity allows") {
  std::vector<ClipRecord> clips;
  for (int i = 0; i < 6; ++i) {
    clips.push_back(strong_clip("s" + std::to_string(i), {{i % 2, 0.0, 1.0}}));
  }
  const Dataset data = tiny_dataset(std::move(clips), 2);
  TaskData task;
  for (std::size_t i = 0; i < 6; ++i) task.strong.push_back(i);
  RehearsalStore store;
  store.cap_strong = 10;
  const RehearsalStore out = nr_update(store, data, task, 4);
  std::set<std::size_t> kept;
  for (const StoreEntry& e : out.strong) kept.insert(e.clip_index);
  CHECK(kept == std::set<std::size_t>({0, 1, 2, 3, 4, 5}));

  const RehearsalStore again = nr_update(store, data, task, 4);
  REQUIRE(again.strong.size() == out.strong.size());
  for (std::size_t i = 0; i < out.strong.size(); ++i) {
    CHECK(again.strong[i].clip_index == out.strong[i].clip_index);
  }
}

TEST_CASE("naive rehearsal mirrors pool imbalance; balanced update does not") {
  // 90 clips of class 0, 10 of class 1
  std::vector<ClipRecord> clips;
  for (int i = 0; i < 90; ++i) {
    clips.push_back(strong_clip("a" + std::to_string(i), {{0, 0.0, 1.0}}));
  }
  for (int i = 0; i < 10; ++i) {
    clips.push_back(strong_clip("b" + std::to_string(i), {{1, 0.0, 1.0}}));
  }
  const Dataset data = tiny_dataset(std::move(clips), 2);
  TaskData task;
  for (std::size_t i = 0; i < 100; ++i) task.strong.push_back(i);
  RehearsalStore store;
  store.cap_strong = 10;

  double minority_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const RehearsalStore out = nr_update(store, data, task, seed);
    REQUIRE(out.strong.size() == 10);
    minority_sum += double(class_counts(out.strong)[1]);
  }
  // hypergeometric(100, 10, 10): mean 1, var = 10 * .1 * .9 * (90/99)
  const double mean = minority_sum / 1000.0;
  const double sigma_of_mean = std::sqrt(10.0 * 0.1 * 0.9 * (90.0 / 99.0) / 1000.0);
  CHECK(std::abs(mean - 1.0) <= 3.0 * sigma_of_mean);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RehearsalStore out = update_memory(store, data, task, {0, 1}, seed);
    auto counts = class_counts(out.strong);
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);
  }
}

TEST_CASE("rehearsal draws are seeded permutation prefixes") {
  std::vector<ClipRecord> clips;
  for (int i = 0; i < 4; ++i) {
    clips.push_back(strong_clip("s" + std::to_string(i), {{0, 0.0, 1.0}}));
  }
  const Dataset data = tiny_dataset(std::move(clips), 1);
  TaskData task;
  for (std::size_t i = 0; i < 4; ++i) task.strong.push_back(i);
  RehearsalStore store;
  store.cap_strong = 4;
  store = update_memory(store, data, task, {0}, 0);
  REQUIRE(store.strong.size() == 4);

  const RehearsalBatch all = draw_rehearsal(store, 4, 0, 9);
  CHECK(std::set<std::size_t>(all.strong.begin(), all.strong.end()).size() == 4);
  CHECK(all.weak.empty());

  const RehearsalBatch none = draw_rehearsal(store, 0, 0, 9);
  CHECK(none.strong.empty());

  CHECK_THROWS_AS(draw_rehearsal(store, 5, 0, 9), std::invalid_argument);
  CHECK_THROWS_AS(draw_rehearsal(store, 0, 1, 9), std::invalid_argument);

  std::map<std::size_t, std::size_t> freq;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    ++freq[draw_rehearsal(store, 1, 0, seed).strong[0]];
  }
  const double sigma = std::sqrt(10000.0 * 0.25 * 0.75);
  for (const auto& [clip, n] : freq) {
    CHECK(std::abs(double(n) - 2500.0) <= 3.0 * sigma);
  }
}

TEST_CASE("store manifests round-trip") {
  SynthSpec spec;
  spec.n_strong = 30;
  spec.n_weak = 15;
  spec.n_unlabeled = 0;
  spec.seed = 6;
  const Dataset data = synth_dataset(spec);
  TaskData task;
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    if (data.clips[i].kind == AnnotationKind::Strong) task.strong.push_back(i);
    if (data.clips[i].kind == AnnotationKind::Weak) task.weak.push_back(i);
  }
  RehearsalStore store;
  store.cap_strong = 12;
  store.cap_weak = 6;
  store = update_memory(store, data, task, {0, 1, 2, 3, 4, 5}, 31);

  const std::string path = "store_roundtrip.txt";
  save_store(store, data, path);
  const RehearsalStore back = load_store(path, data);
  CHECK(back.cap_strong == store.cap_strong);
  CHECK(back.cap_weak == store.cap_weak);
  REQUIRE(back.strong.size() == store.strong.size());
  REQUIRE(back.weak.size() == store.weak.size());
  for (std::size_t i = 0; i < store.strong.size(); ++i) {
    CHECK(back.strong[i].clip_index == store.strong[i].clip_index);
    CHECK(back.strong[i].class_id == store.strong[i].class_id);
    CHECK(back.strong[i].exposure_seconds == store.strong[i].exposure_seconds);
  }
  CHECK(back.ledger == store.ledger);
  std::remove(path.c_str());
}
