#pragma once

#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "streetside/acquisition.hpp"
#include "streetside/detection.hpp"
#include "streetside/geo.hpp"
#include "streetside/mvg.hpp"
#include "streetside/projection.hpp"

namespace streetside::pipeline {

struct ExtractionConfig {
  int n = 5;
  double theta_deg = 90.0;
  int out_side = 2048;
  double detect_threshold = 0.5;
  double detect_retry_threshold = 0.3;
  double crop_threshold = 0.8;
  double nms_iou = 0.3;
  double min_bbox_side = 200.0;
  mvg::RansacParams ransac;
  /// Radius used to discover panoramas around the input.
  double search_radius_m = 100.0;
  double spacing_warn_m = 15.0;
  /// Warn when the localized azimuth from PN_0 strays further than this
  /// from the 90/270 front-heading guess.
  double side_consistency_deg = 45.0;
  unsigned threads = 0;
  acquisition::DownloadOptions download;

  /// Throws Errc::kConfig on values outside their domain.
  void validate() const;
};

struct BuildingLocation {
  Eigen::Vector3d x_b = Eigen::Vector3d::Zero();  ///< camera-0 frame, baseline units
  geo::GeoPoint x_g;
  geo::EnuVec enu;  ///< relative to PN_0
};

struct ViewResult {
  std::string pano_id;
  double alpha_deg = 0.0;
  projection::RectilinearView view;
  std::optional<detection::Detection> detection;
  std::optional<detection::PixelRect> crop_rect;
  std::optional<Image> crop;
  std::string note;  ///< why the view has no crop, if it has none
};

struct Diagnostics {
  int side_deg = 0;
  int chosen_offset = 0;  ///< +1 or -1: which neighbor served as RT_c
  std::string chosen_pano_id;
  std::optional<std::size_t> matches_minus;
  std::optional<std::size_t> matches_plus;
  std::size_t inliers = 0;
  int ransac_iterations = 0;
  std::size_t positive_depth = 0;
  double detect_threshold_used = 0.0;
  detection::BBox bbox0;
  geo::Similarity2D transform;
  std::vector<std::string> warnings;
};

struct ExtractionResult {
  BuildingLocation building_location;
  std::vector<ViewResult> views;
  Diagnostics diagnostics;

  std::size_t crop_count() const;
};

/// 90 when the input lies to the right of the travel direction, else 270.
/// Throws Errc::kUndefinedSide when input and pano coincide.
int front_heading_side(const acquisition::PanoMetadata& pano, const geo::GeoPoint& input);

/// Bearing from the pano to x_g relative to its heading, in [0, 360).
/// Throws Errc::kUndefinedSide when x_g coincides with the pano.
double optimal_azimuth(const acquisition::PanoMetadata& pano, const geo::GeoPoint& x_g);

/// Downloads each panorama once and shares it between concurrent callers.
class PanoramaCache {
 public:
  PanoramaCache(acquisition::Provider& provider, acquisition::DownloadOptions opts = {});

  std::shared_ptr<const acquisition::Panorama> get(const acquisition::PanoMetadata& meta);
  /// Seeds the cache, e.g. with panoramas that are already in memory.
  void put(acquisition::Panorama pano);

 private:
  using Entry = std::shared_future<std::shared_ptr<const acquisition::Panorama>>;
  acquisition::Provider& provider_;
  acquisition::DownloadOptions opts_;
  std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

/// Steps 3 to 8: front-heading views of PN_-1..PN_+1, detection in RT_0,
/// matching, essential matrix, triangulation and the planar similarity to ENU.
/// Failures carry Error::step().
BuildingLocation localize_building(const acquisition::PanoSequence& seq,
                                   const geo::GeoPoint& input, PanoramaCache& panos,
                                   detection::Detector& detector, mvg::FeatureMatcher& matcher,
                                   const ExtractionConfig& cfg, Diagnostics* diag = nullptr);

/// Steps 9 to 12 for every pano in the sequence. Per-view failures leave
/// the view without a crop; they never abort the run.
std::vector<ViewResult> extract_buildings(const acquisition::PanoSequence& seq,
                                          const geo::GeoPoint& x_g, PanoramaCache& panos,
                                          detection::Detector& detector,
                                          const ExtractionConfig& cfg);

using RunInput = std::variant<geo::GeoPoint, std::vector<std::uint8_t>>;

/// Step 1: the GeoPoint itself, or the GPS position in a JPEG's EXIF.
/// Errors carry step "input".
geo::GeoPoint resolve_input(const RunInput& input);

struct Localization {
  geo::GeoPoint input;
  acquisition::PanoSequence sequence;
  BuildingLocation location;
  Diagnostics diagnostics;
};

/// Steps 1 to 8: input position, sequence selection and localization.
/// A JPEG input is reduced to its GPS position before any provider call.
Localization locate(const RunInput& input, acquisition::Provider& provider, PanoramaCache& panos,
                    detection::Detector& detector, mvg::FeatureMatcher& matcher,
                    const ExtractionConfig& cfg);

/// JSON for a localization: input, x_g, ENU offset from PN_0, diagnostics.
std::string localization_json(const Localization& loc);

/// Full run. A JPEG input is reduced to its GPS position before any provider
/// call. When out_dir is set, crops and run_manifest.json are written there.
ExtractionResult run(const RunInput& input, acquisition::Provider& provider,
                     detection::Detector& detector, mvg::FeatureMatcher& matcher,
                     const ExtractionConfig& cfg,
                     const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// File name of a crop: <pano_id>_<alpha with two decimals>.png
std::string crop_file_name(const std::string& pano_id, double alpha_deg);

/// Run-manifest document. Stable field names; deterministic formatting.
std::string run_manifest_json(const geo::GeoPoint& input, const ExtractionResult& result);

/// Writes crops and run_manifest.json.
void persist(const geo::GeoPoint& input, const ExtractionResult& result,
             const std::filesystem::path& out_dir);

}  // namespace streetside::pipeline
