#include "streetside/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streetside/error.hpp"
#include "streetside/image.hpp"

namespace streetside::evaluation {

std::size_t total_ground_truth(const GroundTruthSet& gt) {
  std::size_t n = 0;
  for (const auto& [id, boxes] : gt) n += boxes.size();
  return n;
}

std::vector<LabeledDetection> match_detections_to_gt(const std::vector<ScoredDetection>& dets,
                                                     const GroundTruthSet& gt, double iou_min) {
  std::vector<LabeledDetection> out;
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back({d.image_id, d.bbox, d.score, false});
  std::stable_sort(out.begin(), out.end(), [](const LabeledDetection& a, const LabeledDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.bbox < b.bbox;
  });

  std::map<std::string, std::vector<bool>> claimed;
  for (const auto& [id, boxes] : gt) claimed[id].assign(boxes.size(), false);

  for (auto& d : out) {
    const auto it = gt.find(d.image_id);
    if (it == gt.end()) continue;
    auto& used = claimed[d.image_id];
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (used[i]) continue;
      const double v = detection::iou(d.bbox, it->second[i]);
      if (v > best) {
        best = v;
        best_idx = i;
      }
    }
    if (best >= iou_min) {
      used[best_idx] = true;
      d.true_positive = true;
    }
  }
  return out;
}

std::vector<PrPoint> pr_curve(const std::vector<bool>& tp_labels, std::size_t total_gt) {
  if (total_gt == 0) throw Error(Errc::kInvalidArgument, "PR curve needs ground truth");
  std::vector<PrPoint> pr;
  pr.reserve(tp_labels.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < tp_labels.size(); ++k) {
    if (tp_labels[k]) ++tp;
    pr.push_back({double(tp) / double(k + 1), double(tp) / double(total_gt)});
  }
  return pr;
}

double average_precision(const std::vector<PrPoint>& pr) {
  if (pr.empty()) throw Error(Errc::kInvalidArgument, "empty PR curve");
  // Envelope: precision at recall r is the max precision at any recall >= r.
  std::vector<double> envelope(pr.size());
  double running = 0.0;
  for (std::size_t i = pr.size(); i-- > 0;) {
    running = std::max(running, pr[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    if (pr[i].recall > prev_recall) {
      ap += (pr[i].recall - prev_recall) * envelope[i];
      prev_recall = pr[i].recall;
    }
  }
  return ap;
}

std::vector<double> roc_tpr_at_fp(const std::vector<bool>& tp_labels, std::size_t total_gt,
                                  const std::vector<long>& fp_counts) {
  if (total_gt == 0) throw Error(Errc::kInvalidArgument, "ROC needs ground truth");
  std::vector<double> out;
  out.reserve(fp_counts.size());
  for (long budget : fp_counts) {
    long fp = 0;
    std::size_t tp = 0;
    for (bool is_tp : tp_labels) {
      if (!is_tp && fp + 1 > budget) break;
      if (is_tp) {
        ++tp;
      } else {
        ++fp;
      }
    }
    out.push_back(double(tp) / double(total_gt));
  }
  return out;
}

long count_nt(const EvalCounts& c) {
  if (c.n_b < 0 || c.n < 0) throw Error(Errc::kCountOutOfRange, "negative counts");
  const long per_building = 2 * c.n + 1;
  if (long(c.m.size()) > c.n_b) {
    throw Error(Errc::kCountOutOfRange, "more missing-panorama entries than buildings");
  }
  long missing = 0;
  for (long mi : c.m) {
    if (mi < 0 || mi > per_building) {
      throw Error(Errc::kCountOutOfRange,
                  fmt::format("missing count {} outside [0, {}]", mi, per_building));
    }
    missing += mi;
  }
  return c.n_b * per_building - missing;
}

double op_metric(long n_u, long n_t, long n_o) {
  if (n_t <= n_o) {
    throw Error(Errc::kUndefinedDenominator, fmt::format("N_t ({}) must exceed N_o ({})", n_t, n_o));
  }
  if (n_u < 0 || n_o < 0 || n_u > n_t - n_o) {
    throw Error(Errc::kCountOutOfRange, "N_u must lie in [0, N_t - N_o]");
  }
  return double(n_u) / double(n_t - n_o);
}

std::vector<ScoredDetection> parse_ndjson(const std::string& text) {
  std::vector<ScoredDetection> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoredDetection d;
      d.image_id = j.at("image_id").get<std::string>();
      d.bbox = {j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                j.at("x_max").get<double>(), j.at("y_max").get<double>()};
      d.score = j.value("score", 1.0);
      if (!d.bbox.valid()) throw Error(Errc::kParse, "inverted box");
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kParse, fmt::format("line {}: {}", lineno, e.what()));
    } catch (const Error& e) {
      throw Error(Errc::kParse, fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

std::vector<ScoredDetection> read_ndjson(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_ndjson(std::string(bytes.begin(), bytes.end()));
}

GroundTruthSet to_ground_truth(const std::vector<ScoredDetection>& records) {
  GroundTruthSet gt;
  for (const auto& r : records) gt[r.image_id].push_back(r.bbox);
  return gt;
}

}  // namespace streetside::evaluation
