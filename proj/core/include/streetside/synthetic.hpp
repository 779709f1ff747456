#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streetside/acquisition.hpp"
#include "streetside/geo.hpp"
#include "streetside/image.hpp"
#include "streetside/mvg.hpp"
#include "streetside/projection.hpp"

namespace streetside::synthetic {

struct FaceTexture {
  double cell_m = 0.5;
  Rgb a{178, 64, 48};
  Rgb b{236, 226, 204};
};

/// Axis-aligned box in its own frame, rotated by yaw about the vertical.
/// `center` is the footprint center; `center.u` is the base elevation.
/// At yaw 0 the width runs East and the depth North; yaw turns clockwise.
struct BoxBuilding {
  geo::EnuVec center;
  double width = 10.0;
  double depth = 10.0;
  double height = 6.0;
  double yaw_deg = 0.0;
  FaceTexture texture;
  std::string label = "building";

  Eigen::Vector3d width_axis() const;
  Eigen::Vector3d depth_axis() const;
  std::array<Eigen::Vector3d, 8> corners() const;
};

struct Scene {
  std::vector<BoxBuilding> buildings;
  std::vector<BoxBuilding> occluders;
  Rgb ground{96, 96, 92};
  Rgb sky{150, 190, 235};

  /// Throws Errc::kInvalidScene on non-positive dimensions or overlapping boxes.
  void validate() const;
};

struct CameraPose {
  geo::EnuVec position{0.0, 0.0, 2.5};
  double heading_deg = 0.0;
};

/// Ray-cast equirectangular render, heading at the center column. Rows are
/// shared across up to `threads` workers; output does not depend on it.
Image render_pano(const Scene& scene, const CameraPose& pose, projection::PanoDims dims,
                  unsigned threads = 0);

/// R such that a point X (ENU) has view-frame coordinates R (X - C) in the
/// rectilinear view toward alpha.
Eigen::Matrix3d enu_to_view(const CameraPose& pose, double alpha_deg);

/// True relative pose between two views: X_b = R X_a + t (t in meters).
struct TrueRelativePose {
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
};
TrueRelativePose relative_pose(const CameraPose& a, double alpha_a, const CameraPose& b,
                               double alpha_b);

/// A checker corner on a box face, with the outward face normal.
struct SurfacePoint {
  Eigen::Vector3d position;
  Eigen::Vector3d normal;
};

/// Interior checker corners of the four walls and the roof.
std::vector<SurfacePoint> checker_corners(const BoxBuilding& b);

/// Front-facing to the camera and not hidden behind any box of the scene.
bool visible_from(const Scene& scene, const SurfacePoint& p, const Eigen::Vector3d& camera);

/// Share of the building's camera-facing checker corners that are visible.
double visible_fraction(const Scene& scene, std::size_t building, const CameraPose& pose);

/// Exact correspondences of the target building's visible checker corners
/// between two square rectilinear views. Throws Errc::kInsufficientFeatures
/// when fewer than 5 corners are seen by both.
std::vector<mvg::FeatureMatch> oracle_matches(const Scene& scene, std::size_t target,
                                              const CameraPose& pose_a, double alpha_a,
                                              const CameraPose& pose_b, double alpha_b,
                                              double theta_deg, int side_px);

/// Matcher that ignores pixels and answers from the scene, keyed by pano_id.
class SceneOracleMatcher : public mvg::FeatureMatcher {
 public:
  SceneOracleMatcher(Scene scene, std::map<std::string, CameraPose> poses, std::size_t target = 0);

  std::vector<mvg::FeatureMatch> match(const Image& a, const detection::ViewContext& ctx_a,
                                       const Image& b,
                                       const detection::ViewContext& ctx_b) override;

 private:
  Scene scene_;
  std::map<std::string, CameraPose> poses_;
  std::size_t target_;
};

struct FixturePano {
  std::string pano_id;
  CameraPose pose;
};

struct FixtureSpec {
  Scene scene;
  std::vector<FixturePano> panos;
  geo::GeoPoint origin{29.7604, -95.3698, std::nullopt};
  acquisition::TileGrid grid{8, 4, 512};
  std::size_t target = 0;
  /// A building is annotated as occluded from a pano when less than this
  /// share of its camera-facing corners is visible.
  double occlusion_threshold = 0.5;
};

struct FixtureTruth {
  geo::EnuVec target_enu;  ///< center of the target's street-facing wall
  geo::GeoPoint target_geo;
  std::vector<std::string> occluded_panos;
};

FixtureTruth fixture_truth(const FixtureSpec& spec);

/// Writes manifest.json, tiles/, annotations.json (OracleDetector table),
/// scene.json (this spec) and truth.json into out_dir. Byte-identical on
/// re-runs. Throws Errc::kIo when out_dir cannot be written.
FixtureTruth make_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir,
                          unsigned threads = 0);

std::string fixture_spec_to_json(const FixtureSpec& spec);
FixtureSpec fixture_spec_from_json(const std::string& text);
FixtureSpec load_fixture_spec(const std::filesystem::path& scene_json);

struct StandardFixtureOptions {
  int n = 5;
  double spacing_m = 10.0;
  /// Signed distance of the target's front wall from the street; positive is North.
  double lateral_m = 15.0;
  double camera_height_m = 2.5;
  double building_width_m = 6.0;
  double building_depth_m = 1.0;
  double building_height_m = 12.0;
  /// Clockwise turn of the building about its front-wall center. A few
  /// degrees expose a side wall to neighboring panos; a facade seen as a
  /// single plane leaves the relative pose two-fold ambiguous.
  double building_yaw_deg = 15.0;
  /// 90 drives East (pn00 at the West end), 270 drives West (pn00 at the East end).
  double heading_deg = 90.0;
  /// Index (0-based along the street) of a pano to hide the target from.
  std::optional<int> occlude_index;
  acquisition::TileGrid grid{8, 4, 512};
};

/// Straight East-bound street with 2n+1 panos and one shallow box building
/// facing it, centered opposite the middle pano.
FixtureSpec standard_fixture(const StandardFixtureOptions& opts = {});

}  // namespace streetside::synthetic
