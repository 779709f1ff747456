#pragma once

#include <cstdint>
#include <vector>

#include "streetside/exif.hpp"

namespace streetside::testing {

/// Minimal JPEG (SOI, Exif APP1, EOI) carrying the given GPS tags.
std::vector<std::uint8_t> write_gps_jpeg(const exif::GpsTagSet& tags, bool big_endian);

/// Degrees to DMS rationals with seconds at 1e-4 resolution.
std::array<exif::Rational, 3> to_dms(double deg);

}  // namespace streetside::testing
