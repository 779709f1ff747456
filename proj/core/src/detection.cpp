#include "streetside/detection.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streetside/error.hpp"
#include "streetside/image.hpp"
#include "streetside/projection.hpp"

namespace streetside::detection {
namespace {

bool score_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.bbox < b.bbox;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

BBox clip(const BBox& b, int w, int h) {
  return {std::clamp(b.x_min, 0.0, double(w)), std::clamp(b.y_min, 0.0, double(h)),
          std::clamp(b.x_max, 0.0, double(w)), std::clamp(b.y_max, 0.0, double(h))};
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> ds, double iou_thresh) {
  std::stable_sort(ds.begin(), ds.end(), score_order);
  std::vector<Detection> kept;
  for (auto& d : ds) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.bbox, d.bbox) > iou_thresh;
    });
    if (!overlaps) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<Detection> filter_by_score(const std::vector<Detection>& ds, double min_score) {
  std::vector<Detection> out;
  std::copy_if(ds.begin(), ds.end(), std::back_inserter(out),
               [&](const Detection& d) { return d.score >= min_score; });
  return out;
}

std::vector<Detection> filter_by_min_side(const std::vector<Detection>& ds, double min_side_px) {
  std::vector<Detection> out;
  std::copy_if(ds.begin(), ds.end(), std::back_inserter(out), [&](const Detection& d) {
    return std::max(d.bbox.width(), d.bbox.height()) >= min_side_px;
  });
  return out;
}

Detection select_center_bbox(const std::vector<Detection>& ds, int image_width,
                             int image_height) {
  if (ds.empty()) throw Error(Errc::kNoBuildingFound, "no building detected");
  const Eigen::Vector2d center(image_width / 2.0, image_height / 2.0);
  const Detection* best = nullptr;
  double best_dist = 0.0;
  for (const auto& d : ds) {
    const double dist = (d.bbox.center() - center).norm();
    if (best == nullptr || dist < best_dist ||
        (dist == best_dist &&
         (d.score > best->score || (d.score == best->score && d.bbox < best->bbox)))) {
      best = &d;
      best_dist = dist;
    }
  }
  return *best;
}

PixelRect outward_rect(const BBox& b, int image_width, int image_height) {
  const int x0 = std::clamp(static_cast<int>(std::floor(b.x_min)), 0, image_width);
  const int y0 = std::clamp(static_cast<int>(std::floor(b.y_min)), 0, image_height);
  const int x1 = std::clamp(static_cast<int>(std::ceil(b.x_max)), 0, image_width);
  const int y1 = std::clamp(static_cast<int>(std::ceil(b.y_max)), 0, image_height);
  return {x0, y0, x1 - x0, y1 - y0};
}

// --- OracleDetector --------------------------------------------------------

void OracleDetector::register_image(const std::string& image_id,
                                    std::vector<Detection> annotations) {
  images_[image_id] = std::move(annotations);
}

void OracleDetector::register_pano(const std::string& pano_id, PanoAnnotation annotation) {
  panos_[pano_id] = std::move(annotation);
}

OracleDetector OracleDetector::from_json_text(const std::string& text, Options opts) {
  OracleDetector det(opts);
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("images")) {
      for (const auto& [id, boxes] : j.at("images").items()) {
        std::vector<Detection> ds;
        for (const auto& b : boxes) {
          Detection d;
          d.bbox = {b.at("x_min").get<double>(), b.at("y_min").get<double>(),
                    b.at("x_max").get<double>(), b.at("y_max").get<double>()};
          d.score = 1.0;
          d.label = b.value("label", "building");
          ds.push_back(d);
        }
        det.register_image(id, std::move(ds));
      }
    }
    if (j.contains("panos")) {
      for (const auto& [id, pano] : j.at("panos").items()) {
        PanoAnnotation ann;
        ann.heading_deg = pano.at("heading_deg").get<double>();
        for (const auto& o : pano.at("objects")) {
          PanoObject obj;
          obj.label = o.value("label", "building");
          obj.target = o.value("target", false);
          obj.occluded = o.value("occluded", false);
          const auto& corners = o.at("corners_enu");
          if (corners.size() != 8) throw Error(Errc::kParse, "object needs 8 corners");
          for (std::size_t i = 0; i < 8; ++i) {
            obj.corners_enu[i] = {corners[i].at(0).get<double>(), corners[i].at(1).get<double>(),
                                  corners[i].at(2).get<double>()};
          }
          ann.objects.push_back(obj);
        }
        det.register_pano(id, std::move(ann));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParse, std::string("annotation table: ") + e.what());
  }
  return det;
}

OracleDetector OracleDetector::from_file(const std::filesystem::path& path, Options opts) {
  const auto bytes = read_file_bytes(path);
  return from_json_text(std::string(bytes.begin(), bytes.end()), opts);
}

std::vector<Detection> OracleDetector::jitter(std::vector<Detection> ds, const std::string& key,
                                              int w, int h) const {
  if (opts_.jitter_sigma_px <= 0.0) return ds;
  std::mt19937_64 rng(fnv1a(key, opts_.seed));
  std::normal_distribution<double> noise(0.0, opts_.jitter_sigma_px);
  std::vector<Detection> out;
  for (auto& d : ds) {
    BBox b{d.bbox.x_min + noise(rng), d.bbox.y_min + noise(rng), d.bbox.x_max + noise(rng),
           d.bbox.y_max + noise(rng)};
    b = clip(b, w, h);
    if (b.valid()) out.push_back({b, d.score, d.label});
  }
  return out;
}

std::vector<Detection> OracleDetector::detect(const Image& image, const ViewContext& context) {
  const int w = image.width();
  const int h = image.height();
  if (auto it = images_.find(context.image_id); !context.image_id.empty() && it != images_.end()) {
    return jitter(it->second, context.image_id, w, h);
  }
  const auto it = panos_.find(context.pano_id);
  if (context.pano_id.empty() || it == panos_.end()) {
    throw Error(Errc::kUnknownImage,
                fmt::format("image '{}' / pano '{}' not in annotation table", context.image_id,
                            context.pano_id));
  }
  const PanoAnnotation& ann = it->second;
  const projection::Intrinsics intr = projection::intrinsics_for(context.theta_deg, w);
  const Eigen::Matrix3d to_view = projection::view_to_heading_frame(context.alpha_deg).transpose();

  std::vector<Detection> out;
  for (const auto& obj : ann.objects) {
    if (obj.occluded) continue;
    BBox b{1e300, 1e300, -1e300, -1e300};
    bool in_front = true;
    for (const auto& c : obj.corners_enu) {
      const Eigen::Vector3d v = to_view * projection::enu_to_heading_frame(c, ann.heading_deg);
      if (v.z() <= 1e-3) {
        in_front = false;
        break;
      }
      const double x = intr.f * v.x() / v.z() + intr.p;
      const double y = intr.f * v.y() / v.z() + intr.p;
      b = {std::min(b.x_min, x), std::min(b.y_min, y), std::max(b.x_max, x), std::max(b.y_max, y)};
    }
    if (!in_front) continue;
    b = clip(b, w, h);
    if (b.valid()) out.push_back({b, 1.0, obj.label});
  }
  return jitter(std::move(out), fmt::format("{}@{:.6f}", context.pano_id, context.alpha_deg), w, h);
}

std::vector<Detection> NullDetector::detect(const Image&, const ViewContext&) {
  throw Error(Errc::kDetectorUnavailable, "no detector configured");
}

// --- wire format -----------------------------------------------------------

std::vector<Detection> parse_detect_response(const std::string& body, int image_width,
                                             int image_height) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kDetectorProtocol, std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("detections") || !j.at("detections").is_array()) {
    throw Error(Errc::kDetectorProtocol, "response lacks a 'detections' array");
  }
  std::vector<Detection> out;
  for (const auto& d : j.at("detections")) {
    if (!d.is_object()) throw Error(Errc::kDetectorProtocol, "detection is not an object");
    for (const char* key : {"x_min", "y_min", "x_max", "y_max", "score"}) {
      if (!d.contains(key) || !d.at(key).is_number()) {
        throw Error(Errc::kDetectorProtocol, fmt::format("detection field '{}' missing", key));
      }
    }
    if (!d.contains("label") || !d.at("label").is_string()) {
      throw Error(Errc::kDetectorProtocol, "detection field 'label' missing");
    }
    Detection det;
    det.bbox = {d["x_min"].get<double>(), d["y_min"].get<double>(), d["x_max"].get<double>(),
                d["y_max"].get<double>()};
    det.score = d["score"].get<double>();
    det.label = d["label"].get<std::string>();
    if (!(det.score >= 0.0 && det.score <= 1.0)) {
      throw Error(Errc::kDetectorProtocol, "score outside [0, 1]");
    }
    const BBox& b = det.bbox;
    if (!b.valid() || b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > image_width ||
        b.y_max > image_height) {
      throw Error(Errc::kDetectorProtocol, "box outside image bounds or inverted");
    }
    out.push_back(std::move(det));
  }
  return out;
}

}  // namespace streetside::detection
