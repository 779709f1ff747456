#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "streetside/geo.hpp"

namespace streetside::exif {

struct Rational {
  std::uint32_t num = 0;
  std::uint32_t den = 1;
};

/// Raw GPS tags 0x0001-0x0006 as stored in the GPS IFD.
struct GpsTagSet {
  char lat_ref = 'N';
  std::array<Rational, 3> lat_dms{};
  char lon_ref = 'E';
  std::array<Rational, 3> lon_dms{};
  std::optional<std::uint8_t> alt_ref;  ///< 0 above sea level, 1 below
  std::optional<Rational> alt;
};

/// Walks JPEG segments to the Exif APP1 block, then IFD0 -> GPS IFD.
/// Every read is bounded by the declared segment and IFD sizes.
/// Errors: kNotJpeg, kNoExif, kNoGps, kTruncated, kZeroDenominator, kMalformedExif.
GpsTagSet parse_gps_tags(std::span<const std::uint8_t> jpeg);

/// Decimal degrees from degrees/minutes/seconds rationals.
double dms_to_degrees(const std::array<Rational, 3>& dms);

geo::GeoPoint to_geopoint(const GpsTagSet& tags);

/// parse_gps_tags followed by to_geopoint.
geo::GeoPoint extract_gps(std::span<const std::uint8_t> jpeg);

}  // namespace streetside::exif
