#include "ucil/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ucil/binio.hpp"
#include "ucil/rng.hpp"

namespace ucil {

namespace {

constexpr char kFeatureMagic[9] = "UCILFEA1";
constexpr double kNoiseLevel = -2.0;   // background, zero-centered O(1) scale
constexpr double kEventLevel = 2.0;    // minimum in-band energy
constexpr double kJitter = 0.3;        // per-bin noise
constexpr double kLevelSpread = 0.8;   // per-event loudness range above kEventLevel
constexpr std::size_t kBandWobble = 1; // max per-event shift of the home band

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

const char* kind_name(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::Strong: return "strong";
    case AnnotationKind::Weak: return "weak";
    case AnnotationKind::Unlabeled: return "unlabeled";
  }
  return "?";
}

AnnotationKind kind_from(const std::string& s) {
  if (s == "strong") return AnnotationKind::Strong;
  if (s == "weak") return AnnotationKind::Weak;
  if (s == "unlabeled") return AnnotationKind::Unlabeled;
  throw std::runtime_error("manifest: unknown annotation variant '" + s + "'");
}

}  // namespace

double Dataset::hop_seconds() const {
  if (clips.empty() || frame_count == 0) {
    throw std::logic_error("hop_seconds: empty dataset");
  }
  return clips[0].duration / static_cast<double>(frame_count);
}

std::size_t Dataset::index_of(const std::string& clip_id) const {
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].clip_id == clip_id) return i;
  }
  throw std::invalid_argument("dataset: unknown clip id '" + clip_id + "'");
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

ClassBand class_band(std::size_t class_id, std::size_t n_classes, std::size_t n_mels) {
  // Neighboring prototypes share half their bins, so classes compete for the
  // same spectral features instead of living in private subbands.
  const std::size_t stride = n_mels / (n_classes + 1);
  return {class_id * stride, class_id * stride + 2 * stride};
}

namespace {

struct DrawnClip {
  std::vector<Event> events;
  Tensor features;
};

// One class under the requested proportions (uniform when unspecified).
std::size_t draw_class(Rng& rng, const SynthSpec& spec) {
  if (spec.class_weights.empty()) return rng.index(spec.n_classes);
  double total = 0.0;
  for (double w : spec.class_weights) total += w;
  const double u = rng.uniform(0.0, total);
  double acc = 0.0;
  for (std::size_t c = 0; c + 1 < spec.class_weights.size(); ++c) {
    acc += spec.class_weights[c];
    if (u < acc) return c;
  }
  return spec.class_weights.size() - 1;
}

// k distinct classes, each marginal draw proportional to the weights of the
// classes still available (duplicate draws are rejected and retried).
std::vector<std::size_t> draw_distinct_classes(Rng& rng, const SynthSpec& spec, std::size_t k) {
  std::vector<std::size_t> out;
  while (out.size() < k) {
    const std::size_t c = draw_class(rng, spec);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

// One event per drawn class; events of different classes may overlap in time.
DrawnClip draw_clip(Rng& rng, const SynthSpec& spec, const std::vector<std::size_t>& classes,
                    double min_event_s, double max_event_s) {
  const std::size_t t_len = spec.frame_count;
  const double hop = 10.0 / static_cast<double>(t_len);
  DrawnClip out;
  out.features = Tensor({t_len, spec.n_mels});
  for (double& v : out.features.data) {
    v = kNoiseLevel + rng.uniform(-kJitter, kJitter);
  }

  const std::size_t min_frames =
      std::min(t_len, static_cast<std::size_t>(std::ceil(min_event_s / hop)));
  const std::size_t max_frames =
      std::min(t_len, static_cast<std::size_t>(std::floor(max_event_s / hop)));
  for (std::size_t c : classes) {
    const std::size_t dur = min_frames + rng.index(max_frames - min_frames + 1);
    const std::size_t t0 = rng.index(t_len - dur + 1);
    const std::size_t t1 = t0 + dur;
    // Each event varies a little in placement and loudness, so a class is a
    // small family of patterns rather than one fixed stamp.
    const ClassBand home = class_band(c, spec.n_classes, spec.n_mels);
    const std::size_t width = home.hi - home.lo;
    const long shift = static_cast<long>(rng.index(2 * kBandWobble + 1)) - long(kBandWobble);
    const auto lo = static_cast<std::size_t>(std::clamp(
        static_cast<long>(home.lo) + shift, 0L, static_cast<long>(spec.n_mels - width)));
    const double level = kEventLevel + rng.uniform(0.0, kLevelSpread);
    for (std::size_t t = t0; t < t1; ++t) {
      for (std::size_t f = lo; f < lo + width; ++f) {
        out.features.at(t, f) = level + rng.uniform(-kJitter, kJitter);
      }
    }
    Event ev;
    ev.class_id = static_cast<std::int32_t>(c);
    // duration * t / T lands exactly on 10.0 at the clip edge, unlike t * hop
    ev.onset = 10.0 * static_cast<double>(t0) / static_cast<double>(t_len);
    ev.offset = 10.0 * static_cast<double>(t1) / static_cast<double>(t_len);
    out.events.push_back(ev);
  }
  std::sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.class_id < b.class_id;
  });
  return out;
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.n_classes < 2) {
    throw std::invalid_argument("synth_dataset: need at least 2 classes");
  }
  if (spec.n_mels / (spec.n_classes + 1) < 2) {
    throw std::invalid_argument("synth_dataset: too few mel bands for the class prototypes");
  }
  if (!(spec.pair_rate >= 0.0 && spec.pair_rate <= 1.0)) {
    throw std::invalid_argument("synth_dataset: pair_rate must lie in [0, 1]");
  }
  if (!spec.class_weights.empty()) {
    if (spec.class_weights.size() != spec.n_classes) {
      throw std::invalid_argument("synth_dataset: class_weights must list every class");
    }
    for (double w : spec.class_weights) {
      if (!(w > 0.0)) throw std::invalid_argument("synth_dataset: class weights must be positive");
    }
  }
  Dataset data;
  data.frame_count = spec.frame_count;
  data.n_mels = spec.n_mels;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    data.class_names.push_back("class" + std::to_string(c));
  }
  Rng rng(derive_seed(spec.seed, "synth"));
  std::size_t serial = 0;
  auto add_clip = [&](AnnotationKind kind) {
    // Weak clips carry sustained events so their clip-level label describes
    // nearly every frame; strong and unlabeled clips get short events.
    // Most clips hold one class; pair_rate of them pair it with a second one.
    const bool weak = kind == AnnotationKind::Weak;
    const bool pair = rng.uniform(0.0, 1.0) < spec.pair_rate && spec.n_classes > 1;
    const std::vector<std::size_t> classes = draw_distinct_classes(rng, spec, pair ? 2 : 1);
    DrawnClip drawn = draw_clip(rng, spec, classes, weak ? 8.0 : 1.0, weak ? 10.0 : 4.0);
    ClipRecord rec;
    char idbuf[24];
    std::snprintf(idbuf, sizeof idbuf, "clip_%06zu", serial++);
    rec.clip_id = idbuf;
    rec.kind = kind;
    rec.feature_path = std::string("features/") + rec.clip_id + ".fea";
    if (kind == AnnotationKind::Strong) {
      rec.events = drawn.events;
    } else if (kind == AnnotationKind::Weak) {
      std::set<std::int32_t> labels;
      for (const Event& e : drawn.events) labels.insert(e.class_id);
      rec.weak_labels.assign(labels.begin(), labels.end());
    }
    data.clips.push_back(std::move(rec));
    data.features.push_back(std::move(drawn.features));
  };
  for (std::size_t i = 0; i < spec.n_strong; ++i) add_clip(AnnotationKind::Strong);
  for (std::size_t i = 0; i < spec.n_weak; ++i) add_clip(AnnotationKind::Weak);
  for (std::size_t i = 0; i < spec.n_unlabeled; ++i) add_clip(AnnotationKind::Unlabeled);
  return data;
}

// ---------------------------------------------------------------------------
// log-mel
// ---------------------------------------------------------------------------

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<double> magnitude_spectrum(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  const std::size_t nbins = n / 2 + 1;
  std::vector<double> mags(nbins);
  if (is_pow2(n)) {
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = frame[i];
    fft_radix2(buf);
    for (std::size_t k = 0; k < nbins; ++k) mags[k] = std::abs(buf[k]);
  } else {
    for (std::size_t k = 0; k < nbins; ++k) {  // direct DFT fallback
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
        re += frame[i] * std::cos(ang);
        im += frame[i] * std::sin(ang);
      }
      mags[k] = std::hypot(re, im);
    }
  }
  return mags;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

Tensor logmel(const std::vector<double>& waveform, double sample_rate, std::size_t window,
              std::size_t hop, std::size_t n_mels) {
  if (waveform.size() < window) {
    throw std::invalid_argument("logmel: waveform shorter than one window (" +
                                std::to_string(waveform.size()) + " < " +
                                std::to_string(window) + ")");
  }
  for (double v : waveform) {
    if (!std::isfinite(v)) throw std::invalid_argument("logmel: non-finite sample");
  }
  const std::size_t t_len = (waveform.size() - window) / hop + 1;
  const std::size_t nbins = window / 2 + 1;

  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(window));
  }

  // triangular HTK mel filters over the bin center frequencies
  std::vector<double> mel_pts(n_mels + 2);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  for (std::size_t i = 0; i < mel_pts.size(); ++i) {
    mel_pts[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  std::vector<std::vector<double>> fbank(n_mels, std::vector<double>(nbins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = mel_pts[m], mid = mel_pts[m + 1], hi = mel_pts[m + 2];
    for (std::size_t k = 0; k < nbins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(window);
      if (f > lo && f < mid) {
        fbank[m][k] = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fbank[m][k] = (hi - f) / (hi - mid);
      }
    }
  }

  Tensor out({t_len, n_mels});
  std::vector<double> frame(window);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < window; ++i) frame[i] = waveform[t * hop + i] * hann[i];
    const std::vector<double> mags = magnitude_spectrum(frame);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < nbins; ++k) e += fbank[m][k] * mags[k];
      out.at(t, m) = std::log(std::max(e, 1e-10));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// task splitting
// ---------------------------------------------------------------------------

std::vector<TaskSpec> split_tasks(const std::vector<std::string>& class_names, TaskMode mode,
                                  std::uint64_t seed) {
  Rng rng(derive_seed(seed, "task_split"));
  std::vector<TaskSpec> tasks;
  if (mode == TaskMode::TwoTask) {
    std::vector<std::int32_t> ids(class_names.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>(i);
    rng.shuffle(ids);
    const std::size_t first = (ids.size() + 1) / 2;
    TaskSpec t0{0, {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(first)}};
    TaskSpec t1{1, {ids.begin() + static_cast<std::ptrdiff_t>(first), ids.end()}};
    std::sort(t0.class_ids.begin(), t0.class_ids.end());
    std::sort(t1.class_ids.begin(), t1.class_ids.end());
    tasks = {std::move(t0), std::move(t1)};
  } else {
    static const std::vector<std::vector<std::string>> kGroups = {
        {"vacuum cleaner", "frying", "blender"},
        {"electric shaver/toothbrush", "running water"},
        {"speech", "dog", "cat"},
        {"dishes", "alarm bell ringing"},
    };
    std::size_t covered = 0;
    std::vector<std::vector<std::int32_t>> groups;
    for (const auto& names : kGroups) {
      std::vector<std::int32_t> ids;
      for (const std::string& name : names) {
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) {
          throw std::invalid_argument("split_tasks: four-task grouping needs class '" + name +
                                      "', not found in the dataset");
        }
        ids.push_back(static_cast<std::int32_t>(it - class_names.begin()));
      }
      covered += ids.size();
      groups.push_back(std::move(ids));
    }
    if (covered != class_names.size()) {
      throw std::invalid_argument("split_tasks: four-task mode expects exactly the 10 grouped "
                                  "class names");
    }
    std::vector<std::size_t> order = {0, 1, 2, 3};
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      tasks.push_back({i, groups[order[i]]});
    }
  }
  return tasks;
}

TaskData partition_task(const Dataset& data, const TaskSpec& task, std::uint64_t seed) {
  const std::set<std::int32_t> wanted(task.class_ids.begin(), task.class_ids.end());
  TaskData out;
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const ClipRecord& clip = data.clips[i];
    switch (clip.kind) {
      case AnnotationKind::Strong: {
        bool hit = false;
        for (const Event& e : clip.events) hit = hit || wanted.count(e.class_id) > 0;
        if (hit) out.strong.push_back(i);
        break;
      }
      case AnnotationKind::Weak: {
        bool hit = false;
        for (std::int32_t c : clip.weak_labels) hit = hit || wanted.count(c) > 0;
        if (hit) out.weak.push_back(i);
        break;
      }
      case AnnotationKind::Unlabeled:
        out.unlabeled.push_back(i);
        break;
    }
  }
  auto hold_out = [&](std::vector<std::size_t>& train, std::vector<std::size_t>& val,
                      const char* salt) {
    const std::size_t n = train.size();
    std::size_t n_val = n / 10;
    if (n_val == 0 && n >= 2) n_val = 1;
    if (n_val == 0) return;
    Rng rng(derive_seed(seed, std::string(salt) + "/" + std::to_string(task.task_index)));
    std::vector<std::size_t> picks = rng.sample_without_replacement(n, n_val);
    std::vector<bool> is_val(n, false);
    for (std::size_t p : picks) is_val[p] = true;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
      (is_val[i] ? val : keep).push_back(train[i]);
    }
    train = std::move(keep);
  };
  hold_out(out.strong, out.val_strong, "val_strong");
  hold_out(out.weak, out.val_weak, "val_weak");
  return out;
}

Tensor rasterize_targets(const ClipRecord& clip, std::size_t frame_count,
                         const std::vector<std::int32_t>& model_order,
                         const std::vector<std::int32_t>& allowed) {
  Tensor out({frame_count, model_order.size()});
  const std::set<std::int32_t> allow(allowed.begin(), allowed.end());
  std::map<std::int32_t, std::size_t> col;
  for (std::size_t j = 0; j < model_order.size(); ++j) col[model_order[j]] = j;
  const double hop = clip.duration / static_cast<double>(frame_count);
  if (clip.kind == AnnotationKind::Strong) {
    for (const Event& e : clip.events) {
      if (!allow.count(e.class_id)) continue;
      const auto it = col.find(e.class_id);
      if (it == col.end()) continue;
      const auto t0 = static_cast<std::size_t>(
          std::min<double>(std::lround(e.onset / hop), static_cast<double>(frame_count)));
      const auto t1 = static_cast<std::size_t>(
          std::min<double>(std::lround(e.offset / hop), static_cast<double>(frame_count)));
      for (std::size_t t = t0; t < t1; ++t) out.at(t, it->second) = 1.0;
    }
  } else if (clip.kind == AnnotationKind::Weak) {
    for (std::int32_t c : clip.weak_labels) {
      if (!allow.count(c)) continue;
      const auto it = col.find(c);
      if (it == col.end()) continue;
      for (std::size_t t = 0; t < frame_count; ++t) out.at(t, it->second) = 1.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

void write_features(const Tensor& feats, const std::string& path) {
  if (feats.rank() != 2) {
    throw std::invalid_argument("write_features: expected T x F, got " + shape_str(feats.shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_features: cannot open " + path);
  write_magic(os, kFeatureMagic);
  write_u32_le(os, static_cast<std::uint32_t>(feats.shape[0]));
  write_u32_le(os, static_cast<std::uint32_t>(feats.shape[1]));
  for (double v : feats.data) write_f64_le(os, v);
  if (!os) throw std::runtime_error("write_features: write failed for " + path);
}

Tensor read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_features: cannot open " + path);
  expect_magic(is, kFeatureMagic, "read_features");
  const std::size_t t_len = read_u32_le(is);
  const std::size_t f = read_u32_le(is);
  Tensor out({t_len, f});
  for (double& v : out.data) v = read_f64_le(is);
  return out;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  std::ofstream os(fs::path(dir) / "manifest.txt");
  if (!os) throw std::runtime_error("save_dataset: cannot open manifest in " + dir);
  os << "#ucil-manifest v1\n";
  os << "#classes ";
  for (std::size_t i = 0; i < data.class_names.size(); ++i) {
    if (i) os << ",";
    os << data.class_names[i];
  }
  os << "\n#frames " << data.frame_count << "\n#mels " << data.n_mels << "\n";
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const ClipRecord& clip = data.clips[i];
    std::string ann = "-";
    if (clip.kind == AnnotationKind::Strong) {
      std::ostringstream a;
      for (std::size_t e = 0; e < clip.events.size(); ++e) {
        if (e) a << ";";
        a << clip.events[e].class_id << ":" << format_double(clip.events[e].onset) << ":"
          << format_double(clip.events[e].offset);
      }
      ann = a.str().empty() ? "-" : a.str();
    } else if (clip.kind == AnnotationKind::Weak) {
      std::ostringstream a;
      for (std::size_t l = 0; l < clip.weak_labels.size(); ++l) {
        if (l) a << ",";
        a << clip.weak_labels[l];
      }
      ann = a.str().empty() ? "-" : a.str();
    }
    os << clip.clip_id << "\t" << kind_name(clip.kind) << "\t" << kind_name(clip.kind) << "\t"
       << ann << "\t" << clip.feature_path << "\n";
    write_features(data.features[i], (fs::path(dir) / clip.feature_path).string());
  }
}

Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  Dataset data;
  std::string line;
  if (!std::getline(is, line) || line != "#ucil-manifest v1") {
    throw std::runtime_error("load_dataset: missing manifest header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#classes ", 0) == 0) {
        data.class_names = split_on(line.substr(9), ',');
      } else if (line.rfind("#frames ", 0) == 0) {
        data.frame_count = std::stoul(line.substr(8));
      } else if (line.rfind("#mels ", 0) == 0) {
        data.n_mels = std::stoul(line.substr(6));
      }
      continue;
    }
    const std::vector<std::string> fields = split_on(line, '\t');
    if (fields.size() != 5) {
      throw std::runtime_error("load_dataset: malformed record '" + line + "'");
    }
    ClipRecord rec;
    rec.clip_id = fields[0];
    rec.kind = kind_from(fields[1]);
    if (rec.kind == AnnotationKind::Strong && fields[3] != "-") {
      for (const std::string& ev : split_on(fields[3], ';')) {
        const std::vector<std::string> parts = split_on(ev, ':');
        if (parts.size() != 3) {
          throw std::runtime_error("load_dataset: malformed event '" + ev + "'");
        }
        Event e;
        e.class_id = std::stoi(parts[0]);
        e.onset = std::stod(parts[1]);
        e.offset = std::stod(parts[2]);
        rec.events.push_back(e);
      }
    } else if (rec.kind == AnnotationKind::Weak && fields[3] != "-") {
      for (const std::string& l : split_on(fields[3], ',')) {
        rec.weak_labels.push_back(std::stoi(l));
      }
    }
    rec.feature_path = fields[4];
    data.features.push_back(read_features((root / rec.feature_path).string()));
    data.clips.push_back(std::move(rec));
  }
  return data;
}

void write_ground_truth(const Dataset& data, const std::vector<std::size_t>& clip_indices,
                        const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_ground_truth: cannot open " + path);
  for (std::size_t i : clip_indices) {
    const ClipRecord& clip = data.clips[i];
    for (const Event& e : clip.events) {
      os << clip.clip_id << "\t" << format_double(e.onset) << "\t" << format_double(e.offset)
         << "\t" << data.class_names[static_cast<std::size_t>(e.class_id)] << "\n";
    }
  }
}

}  // namespace ucil
