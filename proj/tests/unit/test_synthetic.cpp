#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "streetside/acquisition.hpp"
#include "streetside/detection.hpp"
#include "streetside/error.hpp"
#include "streetside/mvg.hpp"
#include "streetside/projection.hpp"
#include "streetside/synthetic.hpp"
#include "two_view.hpp"

using namespace streetside;
using namespace streetside::synthetic;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kIo;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("streetside_syn_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

bool is_background(const Scene& s, Rgb c) { return c == s.sky || c == s.ground; }

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
  }
  return out;
}

StandardFixtureOptions small_grid() {
  StandardFixtureOptions o;
  o.grid = {2, 1, 64};
  return o;
}

}  // namespace

TEST(RenderPano, EmptySceneIsSkyOverGround) {
  const Scene scene;
  const Image img = render_pano(scene, {}, {64, 32});
  for (int v = 0; v < 32; ++v) {
    for (int u = 0; u < 64; ++u) EXPECT_EQ(img.at(u, v), v < 16 ? scene.sky : scene.ground);
  }
}

TEST(RenderPano, BuildingDueEastOfNorthHeading) {
  Scene scene;
  BoxBuilding b;
  b.center = {20.0, 0.0, 0.0};
  b.width = 4.0;
  b.depth = 6.0;
  scene.buildings.push_back(b);
  CameraPose pose;
  pose.heading_deg = 0.0;
  const projection::PanoDims dims{512, 256};
  const Image img = render_pano(scene, pose, dims);
  // psi = +90 lands on the continuous column 384.
  const double expected = projection::dir_to_pano_pixel(dims, {90.0, 0.0}).x() + 0.5;
  EXPECT_DOUBLE_EQ(expected, 384.0);
  for (int v : {120, 127, 128, 134}) {
    double sum = 0;
    int count = 0;
    for (int u = 0; u < 512; ++u) {
      if (!is_background(scene, img.at(u, v))) {
        sum += u + 0.5;
        ++count;
      }
    }
    ASSERT_GT(count, 0) << v;
    EXPECT_NEAR(sum / count, expected, 0.5) << v;
  }
}

TEST(RenderPano, DeterministicAcrossThreads) {
  const FixtureSpec spec = standard_fixture();
  const auto& pose = spec.panos[5].pose;
  const Image a = render_pano(spec.scene, pose, {1024, 512}, 1);
  const Image b = render_pano(spec.scene, pose, {1024, 512}, 1);
  const Image c = render_pano(spec.scene, pose, {1024, 512}, 4);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(RenderPano, RejectsBadInputs) {
  Scene scene;
  CameraPose below;
  below.position.u = -1.0;
  EXPECT_EQ(code_of([&] { render_pano(scene, below, {64, 32}); }), Errc::kInvalidScene);
  EXPECT_EQ(code_of([&] { render_pano(scene, {}, {64, 30}); }), Errc::kInvalidImage);
}

TEST(Scene, ValidateRejectsOverlapAndBadSizes) {
  Scene scene;
  BoxBuilding a, b;
  a.center = {0, 0, 0};
  b.center = {8, 0, 0};
  b.yaw_deg = 45.0;
  scene.buildings = {a, b};
  EXPECT_EQ(code_of([&] { scene.validate(); }), Errc::kInvalidScene);
  scene.buildings[1].center = {20, 0, 0};
  EXPECT_NO_THROW(scene.validate());
  scene.buildings[1].center = {5, 0, 7};  // stacked above a
  EXPECT_NO_THROW(scene.validate());
  scene.buildings[1].height = -1;
  EXPECT_EQ(code_of([&] { scene.validate(); }), Errc::kInvalidScene);
}

TEST(BoxBuilding, AxesFollowCompassYaw) {
  BoxBuilding b;
  b.yaw_deg = 90.0;
  EXPECT_LT((b.width_axis() - Eigen::Vector3d(0, -1, 0)).norm(), 1e-15);
  EXPECT_LT((b.depth_axis() - Eigen::Vector3d(1, 0, 0)).norm(), 1e-15);
}

TEST(OracleMatches, StandardFixtureEpipolarExact) {
  const FixtureSpec spec = standard_fixture();
  const auto& p0 = spec.panos[5].pose;
  const auto& p1 = spec.panos[6].pose;
  const auto ms = oracle_matches(spec.scene, 0, p0, 270.0, p1, 270.0, 90.0, 2048);
  EXPECT_GE(ms.size(), 30u);
  const auto truth = relative_pose(p0, 270.0, p1, 270.0);
  const Eigen::Matrix3d E = streetside::testing::skew(truth.t) * truth.R;
  const Eigen::Matrix3d K = projection::intrinsic_matrix(projection::intrinsics_for(90.0, 2048));
  for (const auto& m : mvg::normalize_matches(ms, K)) {
    EXPECT_LT(std::abs(m.xc.dot(E * m.x0)), 1e-10);
  }
}

TEST(OracleMatches, BehindBothCamerasFails) {
  const FixtureSpec spec = standard_fixture();
  EXPECT_EQ(code_of([&] {
              oracle_matches(spec.scene, 0, spec.panos[5].pose, 90.0, spec.panos[6].pose, 90.0,
                             90.0, 2048);
            }),
            Errc::kInsufficientFeatures);
}

TEST(OracleMatchesProperty, RandomScenesSatisfyTrueEssential) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(-1, 1), size(3, 12), yaw(0, 360), heading(0, 360);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Scene scene;
    BoxBuilding b;
    b.width = size(rng);
    b.depth = size(rng);
    b.height = size(rng);
    b.yaw_deg = yaw(rng);
    b.center = {0, 0, 0};
    scene.buildings.push_back(b);
    const double dist = 20 + 10 * uni(rng);
    const double bearing = heading(rng) * M_PI / 180;
    CameraPose a, c;
    a.position = {dist * std::sin(bearing), dist * std::cos(bearing), 2.5};
    c.position = {a.position.e + 8 * uni(rng), a.position.n + 8 * uni(rng), 2.5 + 0.3 * uni(rng)};
    a.heading_deg = heading(rng);
    c.heading_deg = a.heading_deg + 10 * uni(rng);
    // Aim each view at the building.
    auto aim = [](const CameraPose& p) {
      return geo::wrap_360(std::atan2(-p.position.e, -p.position.n) * 180 / M_PI - p.heading_deg);
    };
    std::vector<mvg::FeatureMatch> ms;
    try {
      ms = oracle_matches(scene, 0, a, aim(a), c, aim(c), 90.0, 1024);
    } catch (const Error&) {
      continue;
    }
    const auto truth = relative_pose(a, aim(a), c, aim(c));
    const Eigen::Matrix3d E = streetside::testing::skew(truth.t) * truth.R;
    const Eigen::Matrix3d K = projection::intrinsic_matrix(projection::intrinsics_for(90.0, 1024));
    for (const auto& m : mvg::normalize_matches(ms, K)) {
      EXPECT_LT(std::abs(m.xc.dot(E * m.x0)), 1e-10);
    }
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(RelativePose, MatchesViewRotations) {
  CameraPose a, b;
  a.position = {1, 2, 2.5};
  a.heading_deg = 30;
  b.position = {-4, 7, 2.7};
  b.heading_deg = 80;
  const auto rel = relative_pose(a, 250.0, b, 280.0);
  const Eigen::Vector3d X(3, 20, 4);
  const Eigen::Vector3d xa = enu_to_view(a, 250.0) * (X - Eigen::Vector3d(1, 2, 2.5));
  const Eigen::Vector3d xb = enu_to_view(b, 280.0) * (X - Eigen::Vector3d(-4, 7, 2.7));
  EXPECT_LT((rel.R * xa + rel.t - xb).norm(), 1e-12);
  EXPECT_LT((rel.R.transpose() * rel.R - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(Visibility, OccluderHidesOnlyItsPano) {
  StandardFixtureOptions o;
  EXPECT_TRUE(fixture_truth(standard_fixture(o)).occluded_panos.empty());
  o.occlude_index = 3;
  const FixtureSpec spec = standard_fixture(o);
  EXPECT_EQ(fixture_truth(spec).occluded_panos, std::vector<std::string>{"pn03"});
  EXPECT_LT(visible_fraction(spec.scene, 0, spec.panos[3].pose), 0.05);
  EXPECT_EQ(visible_fraction(spec.scene, 0, spec.panos[4].pose), 1.0);
}

TEST(FixtureTruth, FrontWallCenter) {
  const auto north = fixture_truth(standard_fixture());
  EXPECT_DOUBLE_EQ(north.target_enu.e, 0.0);
  EXPECT_DOUBLE_EQ(north.target_enu.n, 15.0);
  StandardFixtureOptions o;
  o.lateral_m = -15.0;
  const auto south = fixture_truth(standard_fixture(o));
  EXPECT_DOUBLE_EQ(south.target_enu.n, -15.0);
}

TEST(MakeFixture, WritesLoadableByteStableFixture) {
  TempDir a, b;
  const FixtureSpec spec = standard_fixture(small_grid());
  make_fixture(spec, a.path(), 1);
  make_fixture(spec, b.path(), 3);
  const auto sa = snapshot(a.path());
  EXPECT_EQ(sa, snapshot(b.path()));
  EXPECT_EQ(sa.count("truth.json"), 1u);

  acquisition::FixtureProvider provider(a.path());
  ASSERT_EQ(provider.all().size(), 11u);
  int tile_dirs = 0;
  for (const auto& e : fs::directory_iterator(a.path() / "tiles")) tile_dirs += e.is_directory();
  EXPECT_EQ(tile_dirs, 11);
  const auto pano = acquisition::download_panorama(provider, provider.all()[4]);
  EXPECT_EQ(pano.image, render_pano(spec.scene, spec.panos[4].pose, {128, 64}));

  const auto back = load_fixture_spec(a.path() / "scene.json");
  EXPECT_EQ(fixture_spec_to_json(back), fixture_spec_to_json(spec));
}

TEST(MakeFixture, UnwritableDirectoryFails) {
  TempDir dir;
  write_file_bytes(dir.path() / "plain_file", std::vector<std::uint8_t>{1});
  EXPECT_EQ(code_of([&] { make_fixture(standard_fixture(small_grid()), dir.path() / "plain_file" / "x"); }),
            Errc::kIo);
}

TEST(MakeFixture, AnnotationsDriveOracleDetector) {
  TempDir dir;
  StandardFixtureOptions o = small_grid();
  o.occlude_index = 3;
  make_fixture(standard_fixture(o), dir.path());
  auto det = detection::OracleDetector::from_file(dir.path() / "annotations.json", {});
  const Image view(2048, 2048);
  const auto front = det.detect(view, {"", "pn05", 270.0, 90.0});
  ASSERT_EQ(front.size(), 1u);
  EXPECT_NEAR(front[0].bbox.center().x(), 1024.0, 0.02 * 2048);
  EXPECT_TRUE(det.detect(view, {"", "pn03", 300.0, 90.0}).empty());
  EXPECT_TRUE(det.detect(view, {"", "pn05", 90.0, 90.0}).empty());
}

TEST(SceneOracleMatcher, UsesContextPoses) {
  const FixtureSpec spec = standard_fixture();
  std::map<std::string, CameraPose> poses;
  for (const auto& p : spec.panos) poses[p.pano_id] = p.pose;
  SceneOracleMatcher matcher(spec.scene, poses);
  const Image img(1024, 1024);
  const auto ms = matcher.match(img, {"", "pn05", 270.0, 90.0}, img, {"", "pn04", 270.0, 90.0});
  EXPECT_EQ(ms.size(), oracle_matches(spec.scene, 0, spec.panos[5].pose, 270.0, spec.panos[4].pose,
                                      270.0, 90.0, 1024)
                           .size());
  EXPECT_EQ(code_of([&] { matcher.match(img, {"", "zz", 0, 90}, img, {"", "pn04", 0, 90}); }),
            Errc::kUnknownImage);
}

TEST(DistortionProperty, AspectBestWhenAimedAtObject) {
  // A 4 m square wall, centered at camera height, 12 m away on bearing 30.
  Scene scene;
  BoxBuilding wall;
  wall.width = 4.0;
  wall.depth = 0.2;
  wall.height = 4.0;
  const double bearing = 30.0;
  wall.yaw_deg = bearing;  // width axis perpendicular to the line of sight
  const double r = 12.0 + wall.depth / 2;
  wall.center = {r * std::sin(bearing * M_PI / 180), r * std::cos(bearing * M_PI / 180), 0.5};
  scene.buildings.push_back(wall);
  CameraPose pose;
  pose.heading_deg = 0.0;
  const Image pano = render_pano(scene, pose, {4096, 2048});

  // Aspect ratio: bbox width over the object's height at its center column.
  auto distortion = [&](double alpha) {
    const auto view = projection::render_rectilinear(pano, alpha, 90.0, 512);
    int x0 = 512, x1 = -1;
    for (int y = 0; y < 512; ++y) {
      for (int x = 0; x < 512; ++x) {
        if (is_background(scene, view.image.at(x, y))) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
    EXPECT_GE(x1, x0);
    const int cx = (x0 + x1) / 2;
    int y0 = 512, y1 = -1;
    for (int y = 0; y < 512; ++y) {
      if (is_background(scene, view.image.at(cx, y))) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    return std::abs(std::log(double(x1 - x0 + 1) / double(y1 - y0 + 1)));
  };
  const double best = distortion(bearing);
  EXPECT_LT(best, 0.01);
  // Fully framed offsets grow strictly; at 40 degrees the object is clipped
  // by the frame, which still must not beat the aimed view.
  double prev_left = best, prev_right = best;
  for (int off = 10; off <= 30; off += 10) {
    const double right = distortion(bearing + off), left = distortion(bearing - off);
    EXPECT_GT(right, prev_right) << off;
    EXPECT_GT(left, prev_left) << off;
    prev_right = right;
    prev_left = left;
  }
  // At +-5 degrees the change is below one pixel, so only ties are allowed there.
  for (int off = -40; off <= 40; off += 5) {
    if (std::abs(off) == 5) EXPECT_GE(distortion(bearing + off), best);
    if (std::abs(off) >= 10) EXPECT_GT(distortion(bearing + off), best) << off;
  }
}
