#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <unistd.h>

#include <gtest/gtest.h>

#include "streetside/acquisition.hpp"
#include "streetside/error.hpp"
#include "streetside/image.hpp"

#include <httplib.h>

using namespace streetside;
using namespace streetside::acquisition;
namespace fs = std::filesystem;

namespace {

const geo::GeoPoint kOrigin{29.0, -95.0, std::nullopt};

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kIo;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Panos every `spacing` meters along a line with the given bearing.
std::vector<PanoMetadata> street(int count, double spacing, double bearing_deg = 90.0,
                                 TileGrid grid = {4, 2, 16}) {
  std::vector<PanoMetadata> out;
  const double b = bearing_deg * M_PI / 180.0;
  for (int i = 0; i < count; ++i) {
    const double s = (i - count / 2) * spacing;
    PanoMetadata m;
    m.pano_id = "pn" + std::to_string(i);
    m.location = geo::enu_to_geodetic({s * std::sin(b), s * std::cos(b), 0}, kOrigin);
    m.heading_deg = bearing_deg;
    m.grid = grid;
    out.push_back(m);
  }
  return out;
}

Image noise_image(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  Image img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng());
  return img;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("streetside_acq_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Writes a manifest and tiles; returns the reference panoramas by id.
std::map<std::string, Image> write_fixture(const fs::path& root, std::vector<PanoMetadata> metas) {
  std::map<std::string, Image> refs;
  write_file_bytes(root / "manifest.json", [&] {
    const auto s = to_manifest_json(metas);
    return std::vector<std::uint8_t>(s.begin(), s.end());
  }());
  unsigned seed = 1;
  for (const auto& m : metas) {
    const Image pano = noise_image(m.grid.width(), m.grid.height(), seed++);
    refs[m.pano_id] = pano;
    const auto tiles = slice_tiles(pano, m.grid);
    fs::create_directories(root / "tiles" / m.pano_id);
    for (int r = 0; r < m.grid.rows; ++r) {
      for (int c = 0; c < m.grid.cols; ++c) {
        write_image(root / "tiles" / m.pano_id / (std::to_string(r) + "_" + std::to_string(c) + ".png"),
                    tiles[std::size_t(r) * m.grid.cols + c]);
      }
    }
  }
  return refs;
}

// Serves tiles from an in-memory pano; each tile fails `failures` times first.
class FlakyProvider : public Provider {
 public:
  FlakyProvider(PanoMetadata meta, Image pano, int failures)
      : meta_(std::move(meta)), tiles_(slice_tiles(pano, meta_.grid)), failures_(failures) {}

  std::vector<PanoMetadata> list_near(const geo::GeoPoint&, double) override { return {meta_}; }
  std::vector<std::uint8_t> fetch_tile(const PanoMetadata& meta, int row, int col) override {
    if (meta.pano_id != meta_.pano_id) throw Error(Errc::kNotFound, "unknown");
    const int now = ++in_flight_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    bool fail = false;
    {
      std::lock_guard lock(mu_);
      fail = attempts_[{row, col}]++ < failures_;
    }
    --in_flight_;
    if (fail) throw Error(Errc::kTransientFetch, "injected");
    return encode_png(tiles_[std::size_t(row) * meta_.grid.cols + col]);
  }

  std::atomic<int> peak_{0};

 private:
  PanoMetadata meta_;
  std::vector<Image> tiles_;
  int failures_;
  std::mutex mu_;
  std::map<std::pair<int, int>, int> attempts_;
  std::atomic<int> in_flight_{0};
};

DownloadOptions recording_options(std::vector<long long>* sleeps, std::mutex* mu) {
  DownloadOptions o;
  o.retry.sleep = [=](std::chrono::milliseconds d) {
    std::lock_guard lock(*mu);
    sleeps->push_back(d.count());
  };
  return o;
}

}  // namespace

TEST(Manifest, RoundTrip) {
  auto metas = street(3, 10.0);
  metas[1].convention = HeadingConvention::kLeftEdge;
  metas[1].capture_date = "2017-09";
  metas[2].location.alt = 3.5;
  const auto back = parse_manifest(to_manifest_json(metas));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].pano_id, metas[i].pano_id);
    EXPECT_EQ(back[i].location, metas[i].location);
    EXPECT_EQ(back[i].heading_deg, metas[i].heading_deg);
    EXPECT_EQ(back[i].grid, metas[i].grid);
    EXPECT_EQ(back[i].convention, metas[i].convention);
    EXPECT_EQ(back[i].capture_date, metas[i].capture_date);
  }
}

TEST(Manifest, MalformedIsParseError) {
  EXPECT_EQ(code_of([] { parse_manifest("{"); }), Errc::kParse);
  EXPECT_EQ(code_of([] { parse_manifest("{\"panos\": 3}"); }), Errc::kParse);
  EXPECT_EQ(code_of([] { parse_manifest("{\"panos\": [{\"pano_id\": \"a\"}]}"); }), Errc::kParse);
  EXPECT_EQ(code_of([] {
              parse_manifest(
                  "{\"panos\":[{\"pano_id\":\"a\",\"lat\":95,\"lon\":0,\"heading_deg\":0,"
                  "\"cols\":1,\"rows\":1,\"tile_px\":8}]}");
            }),
            Errc::kParse);
  EXPECT_EQ(code_of([] {
              parse_manifest(
                  "{\"panos\":[{\"pano_id\":\"a\",\"lat\":1,\"lon\":0,\"heading_deg\":0,"
                  "\"cols\":1,\"rows\":0,\"tile_px\":8}]}");
            }),
            Errc::kParse);
  EXPECT_EQ(code_of([] {
              parse_manifest(
                  "{\"panos\":[{\"pano_id\":\"a\",\"lat\":1,\"lon\":0,\"heading_deg\":0,"
                  "\"cols\":1,\"rows\":1,\"tile_px\":8,\"heading_convention\":\"sideways\"}]}");
            }),
            Errc::kParse);
}

TEST(Manifest, HeadingWrapped) {
  const auto m = parse_manifest(
      "{\"panos\":[{\"pano_id\":\"a\",\"lat\":1,\"lon\":0,\"heading_deg\":-90,"
      "\"cols\":1,\"rows\":1,\"tile_px\":8}]}");
  EXPECT_EQ(m[0].heading_deg, 270.0);
}

TEST(FetchNearby, Examples) {
  TempDir dir;
  write_fixture(dir.path(), street(11, 10.0));
  FixtureProvider provider(dir.path());
  EXPECT_EQ(fetch_nearby(provider, kOrigin, 60.0).size(), 11u);
  const auto near = fetch_nearby(provider, kOrigin, 15.0);
  ASSERT_EQ(near.size(), 3u);
  EXPECT_EQ(near[0].pano_id, "pn5");
  const geo::GeoPoint off = geo::enu_to_geodetic({0, 50, 0}, kOrigin);
  EXPECT_EQ(code_of([&] { fetch_nearby(provider, off, 1.0); }), Errc::kNoCoverage);
  EXPECT_EQ(code_of([&] { fetch_nearby(provider, kOrigin, 0.0); }), Errc::kInvalidArgument);
}

TEST(FetchNearby, DeduplicatesAndStaysInRadius) {
  class Dupes : public Provider {
   public:
    std::vector<PanoMetadata> list_near(const geo::GeoPoint&, double) override {
      auto a = street(9, 7.0);
      auto b = street(9, 7.0);
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }
    std::vector<std::uint8_t> fetch_tile(const PanoMetadata&, int, int) override { return {}; }
  } provider;
  for (double radius : {5.0, 14.5, 22.0, 100.0}) {
    const auto out = fetch_nearby(provider, kOrigin, radius);
    std::vector<std::string> ids;
    for (const auto& m : out) {
      EXPECT_LE(geo::great_circle_distance_m(kOrigin, m.location), radius);
      ids.push_back(m.pano_id);
    }
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(std::unique(ids.begin(), ids.end()), ids.end());
  }
}

TEST(FetchNearby, UnreachableProviderPropagates) {
  HttpProvider::Options o;
  o.metadata_url = "http://127.0.0.1:1/meta?lat={lat}";
  o.tile_url = "http://127.0.0.1:1/t/{pano_id}";
  o.timeout = std::chrono::milliseconds(500);
  HttpProvider provider(o);
  EXPECT_EQ(code_of([&] { fetch_nearby(provider, kOrigin, 10.0); }), Errc::kProviderUnreachable);
}

TEST(SelectSequence, Examples) {
  const auto metas = street(11, 10.0);
  const auto full = select_sequence(metas, kOrigin, {5});
  ASSERT_EQ(full.panos.size(), 11u);
  EXPECT_EQ(full.center_index, 5u);
  for (int i = 0; i < 11; ++i) EXPECT_EQ(full.panos[i].pano_id, "pn" + std::to_string(i));
  EXPECT_TRUE(full.warnings.empty());

  const auto end = select_sequence(metas, metas[0].location, {5});
  ASSERT_EQ(end.panos.size(), 6u);
  EXPECT_EQ(end.center_index, 0u);
  EXPECT_EQ(end.center().pano_id, "pn0");

  const auto single = select_sequence(metas, metas[7].location, {0});
  ASSERT_EQ(single.panos.size(), 1u);
  EXPECT_EQ(single.center().pano_id, "pn7");

  EXPECT_EQ(code_of([] { select_sequence({}, kOrigin); }), Errc::kEmptyInput);
}

TEST(SelectSequence, OrientedAlongHeading) {
  // Driving west: route coordinates grow westward.
  const auto metas = street(7, 10.0, 270.0);
  const auto seq = select_sequence(metas, kOrigin, {3});
  ASSERT_EQ(seq.panos.size(), 7u);
  EXPECT_EQ(seq.panos.front().pano_id, "pn0");
  EXPECT_EQ(seq.route_m[seq.center_index], 0.0);
}

TEST(SelectSequence, SparseSpacingWarns) {
  const auto seq = select_sequence(street(5, 20.0), kOrigin, {2});
  EXPECT_EQ(seq.warnings.size(), 4u);
  SequenceOptions loose;
  loose.spacing_warn_m = 25.0;
  EXPECT_TRUE(select_sequence(street(5, 20.0), kOrigin, loose).warnings.empty());
}

TEST(SelectSequenceProperty, PermutationInvariantAndMonotone) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> bearing(0, 360), spacing(4, 14), jitter(-1.5, 1.5),
      offset(-80, 80);
  for (int trial = 0; trial < 200; ++trial) {
    const int count = 1 + int(rng() % 25);
    auto metas = street(count, spacing(rng), bearing(rng));
    for (auto& m : metas) {
      auto e = geo::geodetic_to_enu(m.location, kOrigin);
      e.e += jitter(rng);
      e.n += jitter(rng);
      m.location = geo::enu_to_geodetic(e, kOrigin);
    }
    const geo::GeoPoint input = geo::enu_to_geodetic({offset(rng), offset(rng), 0}, kOrigin);
    const int n = int(rng() % 7);
    const auto ref = select_sequence(metas, input, {n});

    ASSERT_LE(ref.panos.size(), std::size_t(2 * n + 1));
    double best = 1e300;
    for (const auto& m : metas) best = std::min(best, geo::great_circle_distance_m(input, m.location));
    EXPECT_EQ(geo::great_circle_distance_m(input, ref.center().location), best);
    for (std::size_t i = 1; i < ref.route_m.size(); ++i) EXPECT_LT(ref.route_m[i - 1], ref.route_m[i]);
    EXPECT_LE(ref.center_index, std::size_t(n));
    EXPECT_LE(ref.panos.size() - ref.center_index - 1, std::size_t(n));

    for (int k = 0; k < 3; ++k) {
      std::shuffle(metas.begin(), metas.end(), rng);
      const auto again = select_sequence(metas, input, {n});
      ASSERT_EQ(again.panos.size(), ref.panos.size());
      EXPECT_EQ(again.center_index, ref.center_index);
      EXPECT_EQ(again.route_m, ref.route_m);
      for (std::size_t i = 0; i < ref.panos.size(); ++i) {
        EXPECT_EQ(again.panos[i].pano_id, ref.panos[i].pano_id);
      }
    }
  }
}

TEST(Stitch, Examples) {
  const Image tile = noise_image(16, 16, 3);
  EXPECT_EQ(stitch_tiles({tile}, {1, 1, 16}), tile);

  std::vector<std::optional<Image>> tiles(8 * 4, noise_image(16, 16, 4));
  tiles[3 * 8 + 7].reset();
  const auto msg = message_of([&] { stitch_tiles(tiles, {8, 4, 16}); });
  EXPECT_NE(msg.find("(3,7)"), std::string::npos) << msg;
  EXPECT_EQ(code_of([&] { stitch_tiles(tiles, {8, 4, 16}); }), Errc::kIncompleteGrid);

  tiles[3 * 8 + 7] = noise_image(16, 15, 5);
  EXPECT_EQ(code_of([&] { stitch_tiles(tiles, {8, 4, 16}); }), Errc::kTileSizeMismatch);
  EXPECT_EQ(code_of([&] { stitch_tiles({tile, tile}, {1, 1, 16}); }), Errc::kIncompleteGrid);
}

TEST(Stitch, TilePlacement) {
  const TileGrid g{3, 2, 8};
  std::vector<std::optional<Image>> tiles;
  for (int i = 0; i < 6; ++i) tiles.emplace_back(Image(8, 8, Rgb{std::uint8_t(i), 0, 0}));
  const Image pano = stitch_tiles(tiles, g);
  ASSERT_EQ(pano.width(), 24);
  ASSERT_EQ(pano.height(), 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 24; ++x) EXPECT_EQ(pano.at(x, y).r, (y / 8) * 3 + x / 8);
  }
}

TEST(StitchProperty, SliceRoundTripBitExact) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const TileGrid g{1 + int(rng() % 6), 1 + int(rng() % 4), 4 + int(rng() % 20)};
    std::vector<std::optional<Image>> tiles;
    std::vector<Image> plain;
    for (int i = 0; i < g.cols * g.rows; ++i) {
      plain.push_back(noise_image(g.tile_px, g.tile_px, rng()));
      tiles.emplace_back(plain.back());
    }
    const Image pano = stitch_tiles(tiles, g);
    EXPECT_EQ(slice_tiles(pano, g), plain);
    EXPECT_EQ(stitch_tiles(tiles, g), pano);
  }
}

TEST(RollColumns, ShiftsAndWraps) {
  const Image img = noise_image(10, 3, 9);
  const Image r = roll_columns(img, 3);
  for (int x = 0; x < 10; ++x) EXPECT_EQ(r.at((x + 3) % 10, 1), img.at(x, 1));
  EXPECT_EQ(roll_columns(r, -3), img);
  EXPECT_EQ(roll_columns(img, 20), img);
}

TEST(Download, FixtureRoundTrip) {
  TempDir dir;
  auto metas = street(3, 10.0);
  metas[2].convention = HeadingConvention::kLeftEdge;
  const auto refs = write_fixture(dir.path(), metas);
  FixtureProvider provider(dir.path());
  const Panorama p = download_panorama(provider, provider.all()[0]);
  EXPECT_EQ(p.image, refs.at("pn0"));
  EXPECT_EQ(p.meta.pano_id, "pn0");

  const Panorama left = download_panorama(provider, provider.all()[2]);
  EXPECT_EQ(left.meta.convention, HeadingConvention::kCenterColumn);
  EXPECT_EQ(left.image, roll_columns(refs.at("pn2"), refs.at("pn2").width() / 2));

  PanoMetadata ghost = metas[0];
  ghost.pano_id = "ghost";
  EXPECT_EQ(code_of([&] { download_panorama(provider, ghost); }), Errc::kNotFound);

  fs::remove(dir.path() / "tiles" / "pn1" / "1_3.png");
  const auto msg = message_of([&] { download_panorama(provider, provider.all()[1]); });
  EXPECT_NE(msg.find("(1,3)"), std::string::npos) << msg;
  EXPECT_EQ(code_of([&] { download_panorama(provider, provider.all()[1]); }), Errc::kIncompleteGrid);
}

TEST(Download, WrongTileSizeRejected) {
  TempDir dir;
  auto metas = street(1, 10.0);
  write_fixture(dir.path(), metas);
  write_image(dir.path() / "tiles" / "pn0" / "0_0.png", noise_image(15, 16, 1));
  FixtureProvider provider(dir.path());
  EXPECT_EQ(code_of([&] { download_panorama(provider, metas[0]); }), Errc::kTileSizeMismatch);
}

TEST(Download, RetriesTransientFailures) {
  auto meta = street(1, 10.0, 90.0, {4, 2, 16})[0];
  const Image ref = noise_image(64, 32, 11);
  std::vector<long long> sleeps;
  std::mutex mu;
  FlakyProvider two(meta, ref, 2);
  EXPECT_EQ(download_panorama(two, meta, recording_options(&sleeps, &mu)).image, ref);
  EXPECT_EQ(sleeps.size(), 16u);
  EXPECT_EQ(std::count(sleeps.begin(), sleeps.end(), 250), 8);
  EXPECT_EQ(std::count(sleeps.begin(), sleeps.end(), 500), 8);

  FlakyProvider three(meta, ref, 3);
  EXPECT_EQ(code_of([&] { download_panorama(three, meta, recording_options(&sleeps, &mu)); }),
            Errc::kFetchFailed);
}

TEST(Download, ConcurrencyCapHonored) {
  auto meta = street(1, 10.0, 90.0, {8, 4, 8})[0];
  const Image ref = noise_image(64, 32, 12);
  for (unsigned cap : {1u, 3u, 8u}) {
    FlakyProvider provider(meta, ref, 0);
    DownloadOptions o;
    o.max_concurrency = cap;
    EXPECT_EQ(download_panorama(provider, meta, o).image, ref);
    EXPECT_LE(provider.peak_.load(), int(cap));
  }
}

TEST(HttpProvider, ServesTemplatedRequests) {
  auto metas = street(2, 10.0, 90.0, {2, 1, 8});
  const Image ref = noise_image(16, 8, 21);
  const auto tiles = slice_tiles(ref, metas[0].grid);
  std::atomic<int> failures{1};
  std::string last_meta_query;

  httplib::Server server;
  server.Get("/meta", [&](const httplib::Request& req, httplib::Response& res) {
    last_meta_query = req.get_param_value("lat") + "," + req.get_param_value("r");
    res.set_content(to_manifest_json(metas), "application/json");
  });
  server.Get(R"(/tiles/(\w+)/(\d+)/(\d+)/(\d+)\.png)",
             [&](const httplib::Request& req, httplib::Response& res) {
               if (req.matches[1] != "pn0") {
                 res.status = 404;
                 return;
               }
               if (failures-- > 0) {
                 res.status = 503;
                 return;
               }
               EXPECT_EQ(req.matches[2], "3");
               const int x = std::stoi(req.matches[3]), y = std::stoi(req.matches[4]);
               const auto png = encode_png(tiles[std::size_t(y) * 2 + x]);
               res.set_content(std::string(png.begin(), png.end()), "image/png");
             });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  HttpProvider::Options o;
  o.metadata_url = base + "/meta?lat={lat}&lon={lon}&r={radius}";
  o.tile_url = base + "/tiles/{pano_id}/{zoom}/{x}/{y}.png";
  o.zoom = 3;
  o.max_requests_per_second = 200;
  HttpProvider provider(o);

  const auto near = fetch_nearby(provider, kOrigin, 50.0);
  EXPECT_EQ(near.size(), 2u);
  EXPECT_EQ(last_meta_query, "29.000000000,50");

  DownloadOptions d;
  d.retry.sleep = [](std::chrono::milliseconds) {};
  EXPECT_EQ(download_panorama(provider, metas[0], d).image, ref);
  EXPECT_EQ(code_of([&] { download_panorama(provider, metas[1], d); }), Errc::kNotFound);

  server.stop();
  t.join();
  EXPECT_EQ(code_of([&] { provider.fetch_tile(metas[0], 0, 0); }), Errc::kTransientFetch);
}

TEST(HttpProvider, RejectsUnsupportedScheme) {
  HttpProvider::Options o;
  o.metadata_url = "https://example.invalid/meta";
  o.tile_url = "http://example.invalid/t";
  EXPECT_EQ(code_of([&] { HttpProvider p(o); }), Errc::kConfig);
}
