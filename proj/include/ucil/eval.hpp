#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ucil/tensor.hpp"

namespace ucil {

struct DetectedEvent {
  std::string clip_id;
  std::int32_t class_id = -1;
  double onset = 0.0;
  double offset = 0.0;
};

struct PsdsConfig {
  double rho_dtc = 0.7;
  double rho_gtc = 0.7;
  double rho_cttc = 0.3;
  double alpha_ct = 0.0;
  double alpha_st = 1.0;
  double e_max = 100.0;              // FP/hour axis limit
  std::vector<double> thresholds;    // strictly increasing

  void validate() const;
};

// Scenario presets: timing-precision weighting vs class-confusion weighting.
PsdsConfig psds1_like();
PsdsConfig psds2_like();
std::vector<double> default_threshold_grid();  // 50 points, 0.01..0.99

// Per class: binarize at threshold, median-filter the binary track, emit
// maximal runs. Column j of `probs` reports class `class_ids[j]`.
std::vector<DetectedEvent> decode_events(const Tensor& probs, double threshold,
                                         std::size_t median_width, double hop_seconds,
                                         const std::string& clip_id,
                                         const std::vector<std::int32_t>& class_ids);

struct MatchCounts {
  std::map<std::int32_t, std::size_t> tp, fp, ct;
  std::map<std::int32_t, std::size_t> n_gt;  // ground-truth events per class
};

// Pairwise interval criterion, per clip and class: a detection is a TP when
// some same-class reference event satisfies both ratio thresholds; a non-TP
// intersecting another class's event above rho_cttc cross-triggers toward
// that class; the rest are FPs.
MatchCounts intersection_match(const std::vector<DetectedEvent>& detections,
                               const std::vector<DetectedEvent>& ground_truth,
                               const PsdsConfig& cfg);

// Area under the monotone upper envelope of per-threshold operating points,
// normalized by e_max.
double psds_score(const std::vector<MatchCounts>& per_threshold, const PsdsConfig& cfg,
                  double dataset_hours, const std::vector<std::int32_t>& class_ids);

// Fixed 1-second-style segments, active when any frame is active.
struct SegmentCounts {
  std::vector<std::size_t> tp, fp, fn;  // per column
};

void accumulate_segments(const Tensor& probs, const Tensor& labels, double threshold,
                         double hop_seconds, double segment_seconds, SegmentCounts& counts);

// Macro F1 over the chosen columns; a class absent from both predictions and
// labels scores 1.
double macro_f1(const SegmentCounts& counts, const std::vector<std::size_t>& columns);

double segment_f1(const Tensor& probs, const Tensor& labels, double threshold,
                  double hop_seconds, double segment_seconds = 1.0);

// Interchange format: tab-separated clip_id, onset, offset, class_name.
void write_events(const std::vector<DetectedEvent>& events,
                  const std::vector<std::string>& class_names, const std::string& path);
std::vector<DetectedEvent> read_events(const std::string& path,
                                       const std::vector<std::string>& class_names);

}  // namespace ucil
