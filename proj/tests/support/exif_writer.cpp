#include "exif_writer.hpp"

#include <cmath>

namespace streetside::testing {
namespace {

struct Out {
  bool be;
  std::vector<std::uint8_t> b;

  void u16(std::uint16_t v) {
    if (be) {
      b.push_back(v >> 8);
      b.push_back(v & 0xff);
    } else {
      b.push_back(v & 0xff);
      b.push_back(v >> 8);
    }
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      const int shift = be ? 8 * (3 - i) : 8 * i;
      b.push_back((v >> shift) & 0xff);
    }
  }
  void patch32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      const int shift = be ? 8 * (3 - i) : 8 * i;
      b[at + i] = (v >> shift) & 0xff;
    }
  }
};

}  // namespace

std::array<exif::Rational, 3> to_dms(double deg) {
  deg = std::abs(deg);
  const auto total = static_cast<std::uint64_t>(std::llround(deg * 3600.0 * 10000.0));
  const std::uint32_t d = static_cast<std::uint32_t>(total / (3600ull * 10000));
  const std::uint32_t m = static_cast<std::uint32_t>((total / (60ull * 10000)) % 60);
  const std::uint32_t s = static_cast<std::uint32_t>(total % (60ull * 10000));
  return {exif::Rational{d, 1}, exif::Rational{m, 1}, exif::Rational{s, 10000}};
}

std::vector<std::uint8_t> write_gps_jpeg(const exif::GpsTagSet& t, bool big_endian) {
  Out o{big_endian, {}};
  o.b.insert(o.b.end(), big_endian ? std::initializer_list<std::uint8_t>{'M', 'M'}
                                   : std::initializer_list<std::uint8_t>{'I', 'I'});
  o.u16(42);
  o.u32(8);
  // IFD0: one entry, the GPS pointer.
  o.u16(1);
  o.u16(0x8825);
  o.u16(4);
  o.u32(1);
  o.u32(8 + 2 + 12 + 4);
  o.u32(0);

  const bool alt = t.alt.has_value();
  const std::uint16_t n = alt ? 6 : 4;
  const std::size_t gps_at = o.b.size();
  const std::uint32_t data_at = static_cast<std::uint32_t>(gps_at + 2 + 12 * n + 4);
  o.u16(n);
  std::vector<std::size_t> fixups;
  auto ascii = [&](std::uint16_t tag, char c) {
    o.u16(tag);
    o.u16(2);
    o.u32(2);
    o.b.push_back(static_cast<std::uint8_t>(c));
    o.b.insert(o.b.end(), {0, 0, 0});
  };
  auto rational = [&](std::uint16_t tag, std::uint32_t count) {
    o.u16(tag);
    o.u16(5);
    o.u32(count);
    fixups.push_back(o.b.size());
    o.u32(0);
  };
  ascii(1, t.lat_ref);
  rational(2, 3);
  ascii(3, t.lon_ref);
  rational(4, 3);
  if (alt) {
    o.u16(5);
    o.u16(1);
    o.u32(1);
    o.b.insert(o.b.end(), {t.alt_ref.value_or(0), 0, 0, 0});
    rational(6, 1);
  }
  o.u32(0);

  std::uint32_t cursor = data_at;
  auto emit = [&](std::size_t fix, const exif::Rational* r, int count) {
    o.patch32(fix, cursor);
    for (int i = 0; i < count; ++i) {
      o.u32(r[i].num);
      o.u32(r[i].den);
    }
    cursor += 8 * count;
  };
  emit(fixups[0], t.lat_dms.data(), 3);
  emit(fixups[1], t.lon_dms.data(), 3);
  if (alt) emit(fixups[2], &*t.alt, 1);

  std::vector<std::uint8_t> jpeg = {0xFF, 0xD8, 0xFF, 0xE1};
  const std::size_t len = o.b.size() + 6 + 2;
  jpeg.push_back(static_cast<std::uint8_t>(len >> 8));
  jpeg.push_back(static_cast<std::uint8_t>(len & 0xff));
  jpeg.insert(jpeg.end(), {'E', 'x', 'i', 'f', 0, 0});
  jpeg.insert(jpeg.end(), o.b.begin(), o.b.end());
  jpeg.insert(jpeg.end(), {0xFF, 0xD9});
  return jpeg;
}

}  // namespace streetside::testing
