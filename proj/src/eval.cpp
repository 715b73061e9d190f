#include "ucil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace ucil {

void PsdsConfig::validate() const {
  auto in_unit = [](double r) { return r > 0.0 && r <= 1.0; };
  if (!in_unit(rho_dtc) || !in_unit(rho_gtc) || !in_unit(rho_cttc)) {
    throw std::invalid_argument("psds config: intersection ratios must lie in (0, 1]");
  }
  if (alpha_ct < 0.0 || alpha_st < 0.0) {
    throw std::invalid_argument("psds config: alpha weights must be >= 0");
  }
  if (e_max <= 0.0) throw std::invalid_argument("psds config: e_max must be positive");
  if (thresholds.empty()) throw std::invalid_argument("psds config: empty threshold grid");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (thresholds[i] <= thresholds[i - 1]) {
      throw std::invalid_argument("psds config: threshold grid must be strictly increasing");
    }
  }
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid(50);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = 0.01 + static_cast<double>(i) * (0.98 / 49.0);
  }
  return grid;
}

PsdsConfig psds1_like() {
  PsdsConfig cfg;
  cfg.e_max = 30.0;  // sub-hour eval corpora need a tight FP budget to rank
  cfg.thresholds = default_threshold_grid();
  return cfg;
}

PsdsConfig psds2_like() {
  PsdsConfig cfg;
  cfg.rho_dtc = 0.1;
  cfg.rho_gtc = 0.1;
  cfg.rho_cttc = 0.3;
  cfg.alpha_ct = 0.5;
  cfg.alpha_st = 1.0;
  cfg.e_max = 30.0;
  cfg.thresholds = default_threshold_grid();
  return cfg;
}

std::vector<DetectedEvent> decode_events(const Tensor& probs, double threshold,
                                         std::size_t median_width, double hop_seconds,
                                         const std::string& clip_id,
                                         const std::vector<std::int32_t>& class_ids) {
  if (probs.rank() != 2 || probs.shape[1] != class_ids.size()) {
    throw std::invalid_argument("decode_events: probs must be T x |class_ids|, got " +
                                shape_str(probs.shape));
  }
  if (median_width % 2 == 0) {
    throw std::invalid_argument("decode_events: median width must be odd, got " +
                                std::to_string(median_width));
  }
  const std::size_t t_len = probs.shape[0];
  const std::size_t half = median_width / 2;
  std::vector<DetectedEvent> out;
  std::vector<char> raw(t_len), smooth(t_len);
  for (std::size_t j = 0; j < class_ids.size(); ++j) {
    for (std::size_t t = 0; t < t_len; ++t) raw[t] = probs.at(t, j) >= threshold ? 1 : 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      // binary median over a zero-padded window = majority of ones
      std::size_t ones = 0;
      for (std::size_t k = t >= half ? t - half : 0; k <= t + half && k < t_len; ++k) {
        ones += raw[k];
      }
      smooth[t] = 2 * ones > median_width ? 1 : 0;
    }
    for (std::size_t t = 0; t < t_len;) {
      if (!smooth[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end + 1 < t_len && smooth[end + 1]) ++end;
      DetectedEvent ev;
      ev.clip_id = clip_id;
      ev.class_id = class_ids[j];
      ev.onset = static_cast<double>(t) * hop_seconds;
      ev.offset = static_cast<double>(end + 1) * hop_seconds;
      out.push_back(std::move(ev));
      t = end + 1;
    }
  }
  return out;
}

namespace {

double overlap(const DetectedEvent& a, const DetectedEvent& b) {
  return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

}  // namespace

MatchCounts intersection_match(const std::vector<DetectedEvent>& detections,
                               const std::vector<DetectedEvent>& ground_truth,
                               const PsdsConfig& cfg) {
  std::set<std::tuple<std::string, std::int32_t, double, double>> seen_gt;
  for (const DetectedEvent& g : ground_truth) {
    if (!seen_gt.insert({g.clip_id, g.class_id, g.onset, g.offset}).second) {
      throw std::invalid_argument("intersection_match: duplicated reference event in " +
                                  g.clip_id);
    }
  }
  MatchCounts counts;
  for (const DetectedEvent& g : ground_truth) ++counts.n_gt[g.class_id];
  for (const DetectedEvent& d : detections) {
    const double dur = d.offset - d.onset;
    if (dur <= 0.0) throw std::invalid_argument("intersection_match: empty detection");
    bool tp = false;
    for (const DetectedEvent& g : ground_truth) {
      if (g.clip_id != d.clip_id || g.class_id != d.class_id) continue;
      const double inter = overlap(d, g);
      if (inter / dur >= cfg.rho_dtc && inter / (g.offset - g.onset) >= cfg.rho_gtc) {
        tp = true;
        break;
      }
    }
    if (tp) {
      ++counts.tp[d.class_id];
      continue;
    }
    std::set<std::int32_t> triggered;
    for (const DetectedEvent& g : ground_truth) {
      if (g.clip_id != d.clip_id || g.class_id == d.class_id) continue;
      if (overlap(d, g) / dur >= cfg.rho_cttc) triggered.insert(g.class_id);
    }
    if (triggered.empty()) {
      ++counts.fp[d.class_id];
    } else {
      for (std::int32_t c : triggered) ++counts.ct[c];
    }
  }
  return counts;
}

double psds_score(const std::vector<MatchCounts>& per_threshold, const PsdsConfig& cfg,
                  double dataset_hours, const std::vector<std::int32_t>& class_ids) {
  cfg.validate();
  if (dataset_hours <= 0.0) {
    throw std::invalid_argument("psds_score: dataset duration must be positive");
  }
  if (class_ids.empty()) throw std::invalid_argument("psds_score: empty class list");

  auto count = [](const std::map<std::int32_t, std::size_t>& m, std::int32_t c) {
    const auto it = m.find(c);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  };

  std::vector<std::pair<double, double>> points;  // (eFPR, eTPR)
  for (const MatchCounts& counts : per_threshold) {
    std::vector<double> tpr;
    double efpr = 0.0;
    for (std::int32_t c : class_ids) {
      const double gt = count(counts.n_gt, c);
      if (gt > 0.0) tpr.push_back(count(counts.tp, c) / gt);
      efpr += (count(counts.fp, c) + cfg.alpha_ct * count(counts.ct, c)) / dataset_hours;
    }
    efpr /= static_cast<double>(class_ids.size());
    double mean = 0.0;
    for (double v : tpr) mean += v;
    mean /= tpr.empty() ? 1.0 : static_cast<double>(tpr.size());
    double var = 0.0;
    for (double v : tpr) var += (v - mean) * (v - mean);
    var /= tpr.empty() ? 1.0 : static_cast<double>(tpr.size());
    const double etpr = std::max(0.0, mean - cfg.alpha_st * std::sqrt(var));
    points.push_back({efpr, etpr});
  }

  // monotone upper envelope: env(x) = max eTPR over points with eFPR <= x
  std::sort(points.begin(), points.end());
  double area = 0.0, level = 0.0, x = 0.0;
  for (const auto& [efpr, etpr] : points) {
    if (efpr > cfg.e_max) break;
    if (etpr <= level) continue;
    area += level * (efpr - x);
    x = efpr;
    level = etpr;
  }
  area += level * (cfg.e_max - x);
  return area / cfg.e_max;
}

void accumulate_segments(const Tensor& probs, const Tensor& labels, double threshold,
                         double hop_seconds, double segment_seconds, SegmentCounts& counts) {
  if (!probs.same_shape(labels) || probs.rank() != 2) {
    throw std::invalid_argument("accumulate_segments: probs and labels must share a T x C shape");
  }
  const std::size_t t_len = probs.shape[0];
  const std::size_t n_cols = probs.shape[1];
  const auto seg_frames =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(segment_seconds / hop_seconds)));
  if (counts.tp.empty()) {
    counts.tp.assign(n_cols, 0);
    counts.fp.assign(n_cols, 0);
    counts.fn.assign(n_cols, 0);
  }
  if (counts.tp.size() != n_cols) {
    throw std::invalid_argument("accumulate_segments: column count changed mid-accumulation");
  }
  for (std::size_t start = 0; start < t_len; start += seg_frames) {
    const std::size_t end = std::min(t_len, start + seg_frames);
    for (std::size_t j = 0; j < n_cols; ++j) {
      bool pred = false, truth = false;
      for (std::size_t t = start; t < end; ++t) {
        pred = pred || probs.at(t, j) >= threshold;
        truth = truth || labels.at(t, j) >= 0.5;
      }
      if (pred && truth) ++counts.tp[j];
      if (pred && !truth) ++counts.fp[j];
      if (!pred && truth) ++counts.fn[j];
    }
  }
}

double macro_f1(const SegmentCounts& counts, const std::vector<std::size_t>& columns) {
  if (columns.empty()) throw std::invalid_argument("macro_f1: no columns selected");
  double sum = 0.0;
  for (std::size_t j : columns) {
    if (j >= counts.tp.size()) throw std::invalid_argument("macro_f1: column out of range");
    const double tp = static_cast<double>(counts.tp[j]);
    const double fp = static_cast<double>(counts.fp[j]);
    const double fn = static_cast<double>(counts.fn[j]);
    sum += (tp + fp + fn) == 0.0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return sum / static_cast<double>(columns.size());
}

double segment_f1(const Tensor& probs, const Tensor& labels, double threshold,
                  double hop_seconds, double segment_seconds) {
  SegmentCounts counts;
  accumulate_segments(probs, labels, threshold, hop_seconds, segment_seconds, counts);
  std::vector<std::size_t> columns(probs.shape[1]);
  for (std::size_t j = 0; j < columns.size(); ++j) columns[j] = j;
  return macro_f1(counts, columns);
}

void write_events(const std::vector<DetectedEvent>& events,
                  const std::vector<std::string>& class_names, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_events: cannot open " + path);
  for (const DetectedEvent& e : events) {
    if (e.class_id < 0 || static_cast<std::size_t>(e.class_id) >= class_names.size()) {
      throw std::invalid_argument("write_events: class id " + std::to_string(e.class_id) +
                                  " outside the class list");
    }
    char onset[40], offset[40];
    std::snprintf(onset, sizeof onset, "%.17g", e.onset);
    std::snprintf(offset, sizeof offset, "%.17g", e.offset);
    os << e.clip_id << "\t" << onset << "\t" << offset << "\t"
       << class_names[static_cast<std::size_t>(e.class_id)] << "\n";
  }
}

std::vector<DetectedEvent> read_events(const std::string& path,
                                       const std::vector<std::string>& class_names) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_events: cannot open " + path);
  std::vector<DetectedEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab = line.find('\t'); tab != std::string::npos;
         tab = line.find('\t', start)) {
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 4) throw std::runtime_error("read_events: malformed line '" + line + "'");
    DetectedEvent e;
    e.clip_id = fields[0];
    e.onset = std::stod(fields[1]);
    e.offset = std::stod(fields[2]);
    const auto it = std::find(class_names.begin(), class_names.end(), fields[3]);
    if (it == class_names.end()) {
      throw std::runtime_error("read_events: unknown class '" + fields[3] + "'");
    }
    e.class_id = static_cast<std::int32_t>(it - class_names.begin());
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace ucil
