#pragma once

#include <optional>

#include <Eigen/Core>

namespace streetside::geo {

/// WGS-84 equatorial radius, used as the tangent-plane scale.
inline constexpr double kEarthRadiusM = 6378137.0;

struct GeoPoint {
  double lat = 0.0;  ///< degrees, [-90, 90]
  double lon = 0.0;  ///< degrees, [-180, 180)
  std::optional<double> alt;  ///< meters

  bool operator==(const GeoPoint&) const = default;
};

/// East/North/Up offsets in meters on the plane tangent to an origin.
struct EnuVec {
  double e = 0.0;
  double n = 0.0;
  double u = 0.0;

  Eigen::Vector2d planar() const { return {e, n}; }
};

/// Orientation-preserving 2D similarity: p -> scale * R(rotation) * p + translation.
struct Similarity2D {
  double scale = 1.0;
  double rotation_deg = 0.0;  ///< counter-clockwise in the (x, y) plane
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  Eigen::Matrix2d linear() const;
};

/// Wraps a longitude into [-180, 180).
double normalize_lon(double lon_deg);
/// Wraps an angle into [0, 360).
double wrap_360(double deg);
/// Wraps an angle into [-180, 180).
double wrap_180(double deg);

/// Validates ranges and returns the point with its longitude normalized.
GeoPoint make_geopoint(double lat, double lon, std::optional<double> alt = std::nullopt);

/// Flat-Earth projection onto the plane tangent at `origin`. Both offsets
/// must stay under one degree; throws Errc::kOutOfRange otherwise.
EnuVec geodetic_to_enu(const GeoPoint& p, const GeoPoint& origin);

/// Exact inverse of geodetic_to_enu under the same model.
GeoPoint enu_to_geodetic(const EnuVec& v, const GeoPoint& origin);

/// Clockwise angle from North of the planar vector to - from, in [0, 360).
double bearing_deg(const EnuVec& from, const EnuVec& to);

/// Haversine distance on a sphere of radius kEarthRadiusM.
double great_circle_distance_m(const GeoPoint& a, const GeoPoint& b);

/// The unique similarity mapping a0 -> b0 and a1 -> b1.
Similarity2D fit_similarity_2pt(const Eigen::Vector2d& a0, const Eigen::Vector2d& a1,
                                const Eigen::Vector2d& b0, const Eigen::Vector2d& b1);

Eigen::Vector2d apply_similarity(const Similarity2D& t, const Eigen::Vector2d& p);

}  // namespace streetside::geo
