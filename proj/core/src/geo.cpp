#include "streetside/geo.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

#include "streetside/error.hpp"

namespace streetside::geo {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Meters per degree along a meridian on the tangent plane.
constexpr double kMetersPerDegree = kDegToRad * kEarthRadiusM;

}  // namespace

Eigen::Matrix2d Similarity2D::linear() const {
  const double c = std::cos(rotation_deg * kDegToRad);
  const double s = std::sin(rotation_deg * kDegToRad);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return scale * r;
}

double normalize_lon(double lon_deg) {
  double x = std::fmod(lon_deg + 180.0, 360.0);
  if (x < 0.0) x += 360.0;
  if (x >= 360.0) x -= 360.0;
  return x - 180.0;
}

double wrap_360(double deg) {
  double x = std::fmod(deg, 360.0);
  if (x < 0.0) x += 360.0;
  // fmod of a tiny negative can round up to exactly 360
  if (x >= 360.0) x -= 360.0;
  return x;
}

double wrap_180(double deg) { return wrap_360(deg + 180.0) - 180.0; }

GeoPoint make_geopoint(double lat, double lon, std::optional<double> alt) {
  if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0) {
    throw Error(Errc::kOutOfRange, fmt::format("invalid coordinate ({}, {})", lat, lon));
  }
  return GeoPoint{lat, normalize_lon(lon), alt};
}

EnuVec geodetic_to_enu(const GeoPoint& p, const GeoPoint& origin) {
  const double dlat = p.lat - origin.lat;
  const double dlon = wrap_180(p.lon - origin.lon);
  if (!(std::abs(dlat) < 1.0) || !(std::abs(dlon) < 1.0)) {
    throw Error(Errc::kOutOfRange,
                fmt::format("flat-Earth window exceeded: dlat={} dlon={}", dlat, dlon));
  }
  EnuVec v;
  v.e = dlon * kMetersPerDegree * std::cos(origin.lat * kDegToRad);
  v.n = dlat * kMetersPerDegree;
  v.u = (p.alt && origin.alt) ? *p.alt - *origin.alt : 0.0;
  return v;
}

GeoPoint enu_to_geodetic(const EnuVec& v, const GeoPoint& origin) {
  if (std::abs(origin.lat) >= 90.0) {
    throw Error(Errc::kDegenerateLongitude, "ENU origin at a pole");
  }
  if (!(std::hypot(v.e, v.n, v.u) < 100000.0)) {
    throw Error(Errc::kOutOfRange, "ENU offset exceeds 100 km");
  }
  GeoPoint p;
  p.lat = origin.lat + v.n / kMetersPerDegree;
  p.lon = normalize_lon(origin.lon +
                        v.e / (kMetersPerDegree * std::cos(origin.lat * kDegToRad)));
  if (origin.alt) p.alt = *origin.alt + v.u;
  return p;
}

double bearing_deg(const EnuVec& from, const EnuVec& to) {
  const double de = to.e - from.e;
  const double dn = to.n - from.n;
  if (de == 0.0 && dn == 0.0) {
    throw Error(Errc::kUndefinedBearing, "bearing of a zero-length vector");
  }
  return wrap_360(std::atan2(de, dn) * kRadToDeg);
}

double great_circle_distance_m(const GeoPoint& a, const GeoPoint& b) {
  const double p1 = a.lat * kDegToRad;
  const double p2 = b.lat * kDegToRad;
  const double dp = p2 - p1;
  const double dl = wrap_180(b.lon - a.lon) * kDegToRad;
  const double h = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

Similarity2D fit_similarity_2pt(const Eigen::Vector2d& a0, const Eigen::Vector2d& a1,
                                const Eigen::Vector2d& b0, const Eigen::Vector2d& b1) {
  const std::complex<double> da(a1.x() - a0.x(), a1.y() - a0.y());
  const std::complex<double> db(b1.x() - b0.x(), b1.y() - b0.y());
  if (std::abs(da) == 0.0 || std::abs(db) == 0.0) {
    throw Error(Errc::kDegenerateConfiguration, "coincident similarity control points");
  }
  // scale * e^{i rotation} is the ratio of the planar displacements
  const std::complex<double> q = db / da;
  Similarity2D t;
  t.scale = std::abs(q);
  t.rotation_deg = std::arg(q) * kRadToDeg;
  const std::complex<double> ta = std::complex<double>(b0.x(), b0.y()) -
                                  q * std::complex<double>(a0.x(), a0.y());
  t.translation = {ta.real(), ta.imag()};
  return t;
}

Eigen::Vector2d apply_similarity(const Similarity2D& t, const Eigen::Vector2d& p) {
  return t.linear() * p + t.translation;
}

}  // namespace streetside::geo
