#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "streetside/detection.hpp"
#include "streetside/image.hpp"

namespace streetside::mvg {

using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Putative correspondence between two rectilinear views, in continuous
/// pixel coordinates.
struct FeatureMatch {
  Eigen::Vector2d pt0;
  Eigen::Vector2d pt1;
};

/// Correspondence after K^-1, both with third component 1.
struct NormalizedMatch {
  Eigen::Vector3d x0;
  Eigen::Vector3d xc;
};

struct RansacParams {
  double pixel_threshold = 1.5;
  double confidence = 0.999;
  int max_iterations = 5000;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Eigen::Matrix3d E;                 ///< Frobenius-normalized, singular values (s, s, 0)
  std::vector<std::size_t> inliers;  ///< ascending indices into the input
  int iterations = 0;
};

/// Relative pose of the second camera: X_c = R X_0 + t, with |t| = 1.
struct RelativePose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::UnitX();
  std::size_t positive_depth = 0;  ///< inliers in front of both cameras

  Mat34 projection() const;
};

// --- feature matching ------------------------------------------------------

class FeatureMatcher {
 public:
  virtual ~FeatureMatcher() = default;
  /// Throws Errc::kInsufficientFeatures when fewer than 5 matches survive.
  virtual std::vector<FeatureMatch> match(const Image& a, const detection::ViewContext& ctx_a,
                                          const Image& b,
                                          const detection::ViewContext& ctx_b) = 0;
};

/// FAST corners + rotated BRIEF descriptors (ORB), Hamming nearest neighbour
/// with a ratio test and a mutual cross-check. Deterministic.
class OrbMatcher : public FeatureMatcher {
 public:
  struct Options {
    int max_features = 8000;
    double ratio = 0.8;
    bool cross_check = true;
  };

  OrbMatcher() = default;
  explicit OrbMatcher(Options opts) : opts_(opts) {}

  std::vector<FeatureMatch> match(const Image& a, const detection::ViewContext& ctx_a,
                                  const Image& b, const detection::ViewContext& ctx_b) override;

 private:
  Options opts_;
};

// --- geometry --------------------------------------------------------------

/// x = K^-1 (u, v, 1), same K for both views. Throws kSingularMatrix.
std::vector<NormalizedMatch> normalize_matches(const std::vector<FeatureMatch>& ms,
                                               const Eigen::Matrix3d& K);

/// Five-point minimal solver. Returns every real solution (at most 10),
/// Frobenius-normalized; empty for degenerate samples.
std::vector<Eigen::Matrix3d> solve_essential_minimal(const std::array<NormalizedMatch, 5>& five);

/// First-order geometric (Sampson) error of a correspondence, in squared
/// normalized units.
double sampson_error(const Eigen::Matrix3d& E, const NormalizedMatch& m);

/// Projects an arbitrary 3x3 matrix onto the essential manifold: singular
/// values replaced by (1, 1, 0) / sqrt(2).
Eigen::Matrix3d project_to_essential(const Eigen::Matrix3d& M);

/// Non-minimal linear estimate from >= 8 matches, projected to an essential matrix.
Eigen::Matrix3d solve_essential_linear(const std::vector<NormalizedMatch>& ms);

/// RANSAC around the five-point solver; inlier iff Sampson error <= (threshold / f)^2.
/// Throws kInsufficientMatches (< 5) and kEstimationFailure (< 8 inliers).
RansacResult ransac_essential(const std::vector<NormalizedMatch>& ms, const RansacParams& params,
                              double focal_px);

/// Chooses among the four (R, t) factorizations of E by cheirality over the inliers.
/// Throws kCheiralityFailure unless a strict majority lies in front of both cameras.
RelativePose decompose_essential(const Eigen::Matrix3d& E,
                                 const std::vector<NormalizedMatch>& inliers);

/// Linear (DLT) triangulation in the frame of P0. Throws
/// kTriangulationDegenerate when the rays are (nearly) parallel.
Eigen::Vector3d triangulate_linear(const Mat34& P0, const Mat34& Pc, const NormalizedMatch& m);

/// -M^-1 p4 for P = [M | p4]. Throws kSingularMatrix.
Eigen::Vector3d camera_center(const Mat34& P);

struct TriangulatedMatch {
  Eigen::Vector2d pixel0;  ///< location in the reference view
  Eigen::Vector3d point;   ///< camera-0 frame
};

/// Index of the triangulated match whose reference-view pixel is closest to
/// the bbox center (ties by lowest index). Throws kEmptyInliers.
std::size_t pick_building_point(const std::vector<TriangulatedMatch>& pts,
                                const detection::BBox& bbox0);

/// Geodesic distance between two rotations, degrees.
double rotation_angle_deg(const Eigen::Matrix3d& Ra, const Eigen::Matrix3d& Rb);

}  // namespace streetside::mvg
