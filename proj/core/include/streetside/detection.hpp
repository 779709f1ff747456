#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streetside/image.hpp"

namespace streetside::detection {

/// Axis-aligned box in continuous image coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  Eigen::Vector2d center() const noexcept { return {(x_min + x_max) / 2, (y_min + y_max) / 2}; }
  bool valid() const noexcept { return x_min < x_max && y_min < y_max; }

  auto operator<=>(const BBox&) const = default;
};

struct Detection {
  BBox bbox;
  double score = 0.0;
  std::string label = "building";

  bool operator==(const Detection&) const = default;
};

/// Optional description of where an image came from. Detectors that only
/// look at pixels ignore it.
struct ViewContext {
  std::string image_id;
  std::string pano_id;
  double alpha_deg = 0.0;
  double theta_deg = 90.0;
};

/// Building detector contract: deterministic for identical input, boxes
/// inside the image bounds, safe for concurrent calls.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const Image& image, const ViewContext& context) = 0;
};

double iou(const BBox& a, const BBox& b);

/// Greedy suppression: highest score first; a box is kept iff its IoU with
/// every kept box is <= iou_thresh. Score ties are ordered by bbox.
std::vector<Detection> nms(std::vector<Detection> ds, double iou_thresh = 0.3);

/// Stable subset with score >= min_score.
std::vector<Detection> filter_by_score(const std::vector<Detection>& ds, double min_score);

/// Stable subset whose larger box side is >= min_side_px.
std::vector<Detection> filter_by_min_side(const std::vector<Detection>& ds, double min_side_px);

/// Detection whose box center is nearest the image center; ties go to the
/// higher score, then the lexicographically smaller bbox.
/// Throws Errc::kNoBuildingFound on an empty list.
Detection select_center_bbox(const std::vector<Detection>& ds, int image_width, int image_height);

/// Integer crop rectangle covering the box, rounded outward and clipped.
struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;
};
PixelRect outward_rect(const BBox& b, int image_width, int image_height);

// ---------------------------------------------------------------------------

/// One annotated object seen from a panorama. Corners are East/North/Up
/// offsets in meters from the camera.
struct PanoObject {
  std::string label = "building";
  bool target = false;
  bool occluded = false;
  std::array<Eigen::Vector3d, 8> corners_enu{};
};

struct PanoAnnotation {
  double heading_deg = 0.0;
  std::vector<PanoObject> objects;
};

/// Ground-truth backed detector for tests and synthetic runs.
///
/// Lookup order: `context.image_id` in the 2D table (returned verbatim), then
/// `context.pano_id` in the panorama table, whose unoccluded objects are
/// projected into the view described by the context. Scores are 1.0.
class OracleDetector : public Detector {
 public:
  struct Options {
    double jitter_sigma_px = 0.0;
    std::uint64_t seed = 0;
  };

  OracleDetector() = default;
  explicit OracleDetector(Options opts) : opts_(opts) {}

  void register_image(const std::string& image_id, std::vector<Detection> annotations);
  void register_pano(const std::string& pano_id, PanoAnnotation annotation);

  /// Loads the annotation table JSON written by the synthetic fixture writer.
  static OracleDetector from_file(const std::filesystem::path& path, Options opts);
  static OracleDetector from_json_text(const std::string& text, Options opts);

  std::vector<Detection> detect(const Image& image, const ViewContext& context) override;

 private:
  std::vector<Detection> jitter(std::vector<Detection> ds, const std::string& key, int w,
                                int h) const;

  Options opts_;
  std::map<std::string, std::vector<Detection>> images_;
  std::map<std::string, PanoAnnotation> panos_;
};

/// Always fails; used for geometry-only runs.
class NullDetector : public Detector {
 public:
  std::vector<Detection> detect(const Image& image, const ViewContext& context) override;
};

/// Client for the detector sidecar: POST <base_url>/v1/detect with the PNG
/// image as body, JSON {"detections":[{x_min,y_min,x_max,y_max,score,label}]}
/// in response.
class RemoteDetector : public Detector {
 public:
  struct Options {
    std::string base_url = "http://127.0.0.1:8500";
    std::chrono::milliseconds timeout{30000};
    unsigned max_in_flight = 2;
  };

  explicit RemoteDetector(Options opts);
  ~RemoteDetector() override;
  RemoteDetector(const RemoteDetector&) = delete;
  RemoteDetector& operator=(const RemoteDetector&) = delete;

  std::vector<Detection> detect(const Image& image, const ViewContext& context) override;

  /// GET /v1/health; true when the sidecar answers {"status":"ok"}.
  bool healthy();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parses and validates a sidecar response body against the wire schema.
/// Throws Errc::kDetectorProtocol on any violation.
std::vector<Detection> parse_detect_response(const std::string& body, int image_width,
                                             int image_height);

}  // namespace streetside::detection
