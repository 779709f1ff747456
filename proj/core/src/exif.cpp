#include "streetside/exif.hpp"

#include <cstring>
#include <string>

#include <fmt/format.h>

#include "streetside/error.hpp"

namespace streetside::exif {
namespace {

constexpr std::uint16_t kTagGpsIfd = 0x8825;
constexpr std::uint16_t kTagLatRef = 0x0001;
constexpr std::uint16_t kTagLat = 0x0002;
constexpr std::uint16_t kTagLonRef = 0x0003;
constexpr std::uint16_t kTagLon = 0x0004;
constexpr std::uint16_t kTagAltRef = 0x0005;
constexpr std::uint16_t kTagAlt = 0x0006;

enum TiffType : std::uint16_t {
  kByte = 1,
  kAscii = 2,
  kShort = 3,
  kLong = 4,
  kRational = 5,
  kUndefined = 7,
};

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case kByte:
    case kAscii:
    case kUndefined: return 1;
    case kShort: return 2;
    case kLong: return 4;
    case kRational: return 8;
    default: return 0;
  }
}

// Bounds-checked view over the TIFF block inside the APP1 payload.
class TiffReader {
 public:
  explicit TiffReader(std::span<const std::uint8_t> data) : data_(data) {
    if (data_.size() < 8) throw Error(Errc::kTruncated, "TIFF header truncated");
    if (data_[0] == 'I' && data_[1] == 'I') {
      little_ = true;
    } else if (data_[0] == 'M' && data_[1] == 'M') {
      little_ = false;
    } else {
      throw Error(Errc::kMalformedExif, "bad TIFF byte-order mark");
    }
    if (u16(2) != 42) throw Error(Errc::kMalformedExif, "bad TIFF magic");
  }

  std::uint8_t u8(std::size_t off) const {
    check(off, 1);
    return data_[off];
  }
  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    const std::uint16_t a = data_[off], b = data_[off + 1];
    return little_ ? std::uint16_t(a | (b << 8)) : std::uint16_t((a << 8) | b);
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t byte = data_[off + i];
      v |= little_ ? byte << (8 * i) : byte << (8 * (3 - i));
    }
    return v;
  }
  void check(std::size_t off, std::size_t len) const {
    if (off > data_.size() || len > data_.size() - off) {
      throw Error(Errc::kTruncated, fmt::format("TIFF read of {} bytes at {} past end ({})",
                                                len, off, data_.size()));
    }
  }

 private:
  std::span<const std::uint8_t> data_;
  bool little_ = true;
};

struct IfdEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::size_t value_offset;  // where the value bytes live (inline or pointed-to)
};

std::vector<IfdEntry> read_ifd(const TiffReader& r, std::size_t ifd_offset) {
  const std::uint16_t n = r.u16(ifd_offset);
  r.check(ifd_offset + 2, std::size_t(n) * 12);
  std::vector<IfdEntry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t e = ifd_offset + 2 + i * 12;
    IfdEntry entry{r.u16(e), r.u16(e + 2), r.u32(e + 4), e + 8};
    const std::size_t unit = type_size(entry.type);
    if (unit != 0 && entry.count <= 0xFFFFFFFFu / unit &&
        std::size_t(entry.count) * unit > 4) {
      entry.value_offset = r.u32(e + 8);
    }
    entries.push_back(entry);
  }
  return entries;
}

const IfdEntry* find(const std::vector<IfdEntry>& entries, std::uint16_t tag) {
  for (const auto& e : entries) {
    if (e.tag == tag) return &e;
  }
  return nullptr;
}

char read_ref(const TiffReader& r, const IfdEntry& e, char a, char b) {
  if ((e.type != kAscii && e.type != kByte && e.type != kUndefined) || e.count < 1) {
    throw Error(Errc::kMalformedExif, fmt::format("GPS tag {:#06x} has bad type", e.tag));
  }
  const char c = static_cast<char>(r.u8(e.value_offset));
  if (c != a && c != b) {
    throw Error(Errc::kMalformedExif, fmt::format("GPS reference '{}' not {} or {}", c, a, b));
  }
  return c;
}

Rational read_rational(const TiffReader& r, std::size_t off) {
  Rational q{r.u32(off), r.u32(off + 4)};
  if (q.den == 0) throw Error(Errc::kZeroDenominator, "GPS rational with zero denominator");
  return q;
}

std::array<Rational, 3> read_dms(const TiffReader& r, const IfdEntry& e) {
  if (e.type != kRational || e.count != 3) {
    throw Error(Errc::kMalformedExif,
                fmt::format("GPS tag {:#06x} must be 3 rationals", e.tag));
  }
  r.check(e.value_offset, 24);
  return {read_rational(r, e.value_offset), read_rational(r, e.value_offset + 8),
          read_rational(r, e.value_offset + 16)};
}

GpsTagSet parse_tiff(std::span<const std::uint8_t> tiff) {
  const TiffReader r(tiff);
  const auto ifd0 = read_ifd(r, r.u32(4));
  const IfdEntry* gps_ptr = find(ifd0, kTagGpsIfd);
  if (gps_ptr == nullptr) throw Error(Errc::kNoGps, "no GPS IFD in Exif block");
  if (gps_ptr->type != kLong && gps_ptr->type != kShort) {
    throw Error(Errc::kMalformedExif, "GPS IFD pointer has bad type");
  }
  const std::size_t gps_off =
      gps_ptr->type == kLong ? r.u32(gps_ptr->value_offset) : r.u16(gps_ptr->value_offset);
  const auto gps = read_ifd(r, gps_off);

  const IfdEntry* lat_ref = find(gps, kTagLatRef);
  const IfdEntry* lat = find(gps, kTagLat);
  const IfdEntry* lon_ref = find(gps, kTagLonRef);
  const IfdEntry* lon = find(gps, kTagLon);
  if (!lat_ref || !lat || !lon_ref || !lon) {
    throw Error(Errc::kNoGps, "GPS IFD lacks latitude/longitude tags");
  }

  GpsTagSet tags;
  tags.lat_ref = read_ref(r, *lat_ref, 'N', 'S');
  tags.lat_dms = read_dms(r, *lat);
  tags.lon_ref = read_ref(r, *lon_ref, 'E', 'W');
  tags.lon_dms = read_dms(r, *lon);
  if (const IfdEntry* alt_ref = find(gps, kTagAltRef); alt_ref && alt_ref->count >= 1) {
    tags.alt_ref = r.u8(alt_ref->value_offset);
  }
  if (const IfdEntry* alt = find(gps, kTagAlt)) {
    if (alt->type != kRational || alt->count != 1) {
      throw Error(Errc::kMalformedExif, "GPS altitude must be one rational");
    }
    tags.alt = read_rational(r, alt->value_offset);
  }
  return tags;
}

}  // namespace

GpsTagSet parse_gps_tags(std::span<const std::uint8_t> jpeg) {
  if (jpeg.size() < 2 || jpeg[0] != 0xFF || jpeg[1] != 0xD8) {
    throw Error(Errc::kNotJpeg, "missing JPEG SOI marker");
  }
  std::size_t pos = 2;
  while (pos < jpeg.size()) {
    if (jpeg[pos] != 0xFF) throw Error(Errc::kMalformedExif, "expected JPEG marker");
    while (pos < jpeg.size() && jpeg[pos] == 0xFF) ++pos;  // fill bytes
    if (pos >= jpeg.size()) break;
    const std::uint8_t marker = jpeg[pos++];
    if (marker == 0xD9 || marker == 0xDA) break;  // EOI / start of scan
    if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;
    if (jpeg.size() - pos < 2) throw Error(Errc::kTruncated, "segment length truncated");
    const std::size_t len = (std::size_t(jpeg[pos]) << 8) | jpeg[pos + 1];
    if (len < 2) throw Error(Errc::kMalformedExif, "segment length below 2");
    if (len > jpeg.size() - pos) {
      throw Error(Errc::kTruncated,
                  fmt::format("segment {:#04x} declares {} bytes, {} remain", marker, len,
                              jpeg.size() - pos));
    }
    const auto payload = jpeg.subspan(pos + 2, len - 2);
    static constexpr std::uint8_t kExifId[6] = {'E', 'x', 'i', 'f', 0, 0};
    if (marker == 0xE1 && payload.size() >= 6 && std::memcmp(payload.data(), kExifId, 6) == 0) {
      return parse_tiff(payload.subspan(6));
    }
    pos += len;
  }
  throw Error(Errc::kNoExif, "no Exif APP1 segment");
}

double dms_to_degrees(const std::array<Rational, 3>& dms) {
  double out = 0.0;
  double unit = 1.0;
  for (const Rational& q : dms) {
    if (q.den == 0) throw Error(Errc::kZeroDenominator, "zero denominator");
    out += static_cast<double>(q.num) / static_cast<double>(q.den) / unit;
    unit *= 60.0;
  }
  return out;
}

geo::GeoPoint to_geopoint(const GpsTagSet& tags) {
  double lat = dms_to_degrees(tags.lat_dms);
  double lon = dms_to_degrees(tags.lon_dms);
  if (tags.lat_ref == 'S') lat = -lat;
  if (tags.lon_ref == 'W') lon = -lon;
  if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0) {
    throw Error(Errc::kMalformedExif, fmt::format("GPS coordinate out of range ({}, {})", lat, lon));
  }
  std::optional<double> alt;
  if (tags.alt) {
    alt = static_cast<double>(tags.alt->num) / tags.alt->den;
    if (tags.alt_ref.value_or(0) == 1) alt = -*alt;
  }
  return geo::make_geopoint(lat, lon, alt);
}

geo::GeoPoint extract_gps(std::span<const std::uint8_t> jpeg) {
  return to_geopoint(parse_gps_tags(jpeg));
}

}  // namespace streetside::exif
