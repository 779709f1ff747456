#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "streetside/detection.hpp"

namespace streetside::evaluation {

/// Per-image ground-truth boxes.
using GroundTruthSet = std::map<std::string, std::vector<detection::BBox>>;

struct ScoredDetection {
  std::string image_id;
  detection::BBox bbox;
  double score = 1.0;
};

/// A detection after matching, in global score-descending order.
struct LabeledDetection {
  std::string image_id;
  detection::BBox bbox;
  double score = 0.0;
  bool true_positive = false;
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  bool operator==(const PrPoint&) const = default;
};

/// Counts feeding the overall-practicality metric.
struct EvalCounts {
  long n_b = 0;                ///< number of target buildings
  long n = 0;                  ///< per-side panorama count
  std::vector<long> m;         ///< missing panoramas per building (may be sparse)
};

/// Sorts all detections by score (ties: image id, then bbox) and lets each
/// claim its best-IoU unclaimed ground truth with IoU >= iou_min.
std::vector<LabeledDetection> match_detections_to_gt(const std::vector<ScoredDetection>& dets,
                                                     const GroundTruthSet& gt,
                                                     double iou_min = 0.5);

std::size_t total_ground_truth(const GroundTruthSet& gt);

/// Cumulative (precision, recall) at each prefix of the labels, which must be
/// in score-descending order. Throws kInvalidArgument when total_gt == 0.
std::vector<PrPoint> pr_curve(const std::vector<bool>& tp_labels, std::size_t total_gt);

/// All-points interpolated area under the PR curve.
double average_precision(const std::vector<PrPoint>& pr);

/// True-positive rate at the longest prefix whose false-positive count does
/// not exceed each requested budget (corpus-wide counts).
std::vector<double> roc_tpr_at_fp(const std::vector<bool>& tp_labels, std::size_t total_gt,
                                  const std::vector<long>& fp_counts);

/// N_t = N_b (2n + 1) - sum(m_i).
long count_nt(const EvalCounts& c);

/// N_u / (N_t - N_o).
double op_metric(long n_u, long n_t, long n_o);

/// Newline-delimited JSON records {image_id, x_min, y_min, x_max, y_max, score?}.
std::vector<ScoredDetection> read_ndjson(const std::filesystem::path& path);
std::vector<ScoredDetection> parse_ndjson(const std::string& text);
GroundTruthSet to_ground_truth(const std::vector<ScoredDetection>& records);

}  // namespace streetside::evaluation
