// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ap_oracle.hpp"
#include "commands.hpp"
#include "fixture_cache.hpp"
#include "streetside/acquisition.hpp"
#include "streetside/error.hpp"
#include "streetside/evaluation.hpp"
#include "streetside/exif.hpp"
#include "streetside/geo.hpp"
#include "streetside/image.hpp"
#include "streetside/mvg.hpp"
#include "streetside/pipeline.hpp"
#include "streetside/projection.hpp"
#include "streetside/synthetic.hpp"
#include "temp_dir.hpp"
#include "two_view.hpp"

namespace fs = std::filesystem;
using namespace streetside;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> facts;

  void check(bool ok, std::string fact) {
    pass = pass && ok;
    facts.push_back(ok ? std::move(fact) : "[!] " + fact);
  }
};

// 1 --------------------------------------------------------------------------

Outcome op_reproduction() {
  Outcome o;
  const auto t0 = Clock::now();
  const double op = evaluation::op_metric(426, 547, 39);
  evaluation::EvalCounts c;
  c.n_b = 50;
  c.n = 5;
  c.m = {3};
  const long n_t = evaluation::count_nt(c);
  const double ms = seconds_since(t0) * 1e3;
  o.check(std::abs(op - 0.8386) <= 0.0005, fmt::format("OP {:.6f} (0.8386 +- 0.0005)", op));
  o.check(n_t == 547, fmt::format("N_t {} (547)", n_t));
  o.check(ms < 1.0, fmt::format("{:.4f} ms (< 1 ms)", ms));
  return o;
}

// 2 --------------------------------------------------------------------------

Outcome stitching() {
  Outcome o;
  const acquisition::TileGrid grid{26, 13, 512};
  std::mt19937_64 rng(2);
  std::vector<std::optional<Image>> tiles;
  for (int i = 0; i < grid.cols * grid.rows; ++i) {
    Image t(grid.tile_px, grid.tile_px);
    for (auto& b : t.bytes()) b = static_cast<std::uint8_t>(rng());
    tiles.emplace_back(std::move(t));
  }
  const auto t0 = Clock::now();
  const Image pano = acquisition::stitch_tiles(tiles, grid);
  const auto back = acquisition::slice_tiles(pano, grid);
  const double s = seconds_since(t0);
  o.check(pano.width() == 13312 && pano.height() == 6656,
          fmt::format("{}x{} (13312x6656)", pano.width(), pano.height()));
  bool exact = back.size() == tiles.size();
  for (std::size_t i = 0; exact && i < back.size(); ++i) exact = back[i] == *tiles[i];
  o.check(exact, exact ? "slice-back bit-exact" : "slice-back differs");
  o.check(s < 2.0, fmt::format("{:.3f} s (< 2 s)", s));
  return o;
}

// 3 --------------------------------------------------------------------------

Outcome projection_geometry() {
  using namespace projection;
  Outcome o;
  const auto t0 = Clock::now();
  constexpr int kSide = 2048;

  double worst_span = 0;
  for (double theta : {60.0, 90.0, 120.0}) {
    const Intrinsics k = intrinsics_for(theta, kSide);
    const Eigen::Vector3d l = view_ray(k, 0.0, k.p), r = view_ray(k, kSide, k.p);
    const double span = std::atan2(l.cross(r).norm(), l.dot(r)) * 180.0 / std::numbers::pi;
    worst_span = std::max(worst_span, std::abs(span - theta));
  }
  o.check(worst_span <= 1e-6, fmt::format("span error {:.2e} deg (<= 1e-6)", worst_span));

  std::mt19937_64 rng(11);
  const PanoDims d{13312, 6656};
  std::uniform_real_distribution<double> u(0, d.width - 1e-9), v(0, d.height - 1e-9);
  double worst_px = 0;
  for (int i = 0; i < 10000; ++i) {
    const double pu = u(rng), pv = v(rng);
    const Eigen::Vector2d b = dir_to_pano_pixel(d, pano_pixel_to_dir(d, pu, pv));
    worst_px = std::max({worst_px, std::abs(std::remainder(b.x() - pu, d.width)), std::abs(b.y() - pv)});
  }
  o.check(worst_px <= 1e-9, fmt::format("pano<->dir round trip {:.2e} px (<= 1e-9)", worst_px));

  // A bright square painted where azimuth alpha meets the horizon must land
  // at the center of the view rendered toward alpha.
  constexpr int W = 8192;
  double worst_marker = 0;
  for (double alpha : {0.0, 90.0, 270.0, 179.0}) {
    Image pano(W, W / 2, {40, 40, 40});
    const Eigen::Vector2d c = dir_to_pano_pixel({W, W / 2}, {geo::wrap_180(alpha), 0.0});
    const int cu = int(std::lround(c.x())), cv = int(std::lround(c.y()));
    for (int dv = -3; dv <= 3; ++dv)
      for (int du = -3; du <= 3; ++du) pano.set((cu + du + W) % W, cv + dv, {255, 255, 255});
    for (double theta : {60.0, 90.0, 120.0}) {
      const auto view = render_rectilinear(pano, alpha, theta, kSide);
      double sx = 0, sy = 0, sw = 0;
      for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
          const double w = std::max(0, view.image.at(x, y).r - 40);
          sx += w * (x + 0.5);
          sy += w * (y + 0.5);
          sw += w;
        }
      worst_marker = std::max({worst_marker, std::abs(sx / sw - kSide / 2.0), std::abs(sy / sw - kSide / 2.0)});
    }
  }
  o.check(worst_marker <= 1.0, fmt::format("marker offset {:.3f} px (<= 1)", worst_marker));
  const double s = seconds_since(t0);
  o.check(s < 10.0, fmt::format("{:.2f} s (< 10 s)", s));
  return o;
}

// 4 --------------------------------------------------------------------------

Outcome five_point_ransac() {
  Outcome o;
  double worst_rot = 0, worst_dir = 0, worst_recall = 1, worst_time = 0;
  std::size_t admitted = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto p = streetside::testing::make_two_view(seed, {.count = 200, .outlier_fraction = 0.4});
    const auto t0 = Clock::now();
    mvg::RansacParams params;
    params.seed = seed;
    const auto r = mvg::ransac_essential(p.matches, params, 1024.0);
    std::vector<mvg::NormalizedMatch> in;
    for (std::size_t i : r.inliers) in.push_back(p.matches[i]);
    const auto pose = mvg::decompose_essential(r.E, in);
    worst_time = std::max(worst_time, seconds_since(t0));

    std::size_t true_in = 0, total_in = 0;
    for (std::size_t i : r.inliers) (p.is_inlier[i] ? true_in : admitted)++;
    for (bool b : p.is_inlier) total_in += b;
    worst_recall = std::min(worst_recall, double(true_in) / double(total_in));
    worst_rot = std::max(worst_rot, mvg::rotation_angle_deg(pose.R, p.R));
    // Signed: a flipped baseline counts as a 180 degree error.
    const double cosang = std::clamp(pose.t.normalized().dot(p.t.normalized()), -1.0, 1.0);
    worst_dir = std::max(worst_dir, std::acos(cosang) * 180.0 / std::numbers::pi);
  }
  o.check(worst_rot < 0.1, fmt::format("rotation {:.2e} deg (< 0.1)", worst_rot));
  o.check(worst_dir < 0.5, fmt::format("translation {:.2e} deg (< 0.5)", worst_dir));
  o.check(worst_recall >= 0.95, fmt::format("recall {:.3f} (>= 0.95)", worst_recall));
  o.check(admitted == 0, fmt::format("{} outliers admitted (0)", admitted));
  o.check(worst_time < 1.0, fmt::format("{:.3f} s/trial worst of 20 (< 1 s)", worst_time));
  return o;
}

// 5 --------------------------------------------------------------------------

Outcome triangulation() {
  Outcome o;
  const auto p = streetside::testing::make_two_view(61, {.count = 100});
  mvg::Mat34 P0 = mvg::Mat34::Zero();
  P0.leftCols<3>().setIdentity();
  mvg::Mat34 Pc;
  Pc << p.R, p.t;
  double worst = 0;
  for (const auto& X : p.points) {
    const Eigen::Vector3d Xc = p.R * X + p.t;
    const mvg::NormalizedMatch m{X / X.z(), Xc / Xc.z()};
    const Eigen::Vector3d Y = mvg::triangulate_linear(P0, Pc, m);
    const Eigen::Vector3d Yc = p.R * Y + p.t;
    worst = std::max({worst, (Y / Y.z() - m.x0).norm(), (Yc / Yc.z() - m.xc).norm()});
  }
  o.check(p.points.size() == 100 && worst < 1e-6,
          fmt::format("reprojection {:.2e} over {} points (< 1e-6)", worst, p.points.size()));

  double worst_c = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> g(0, 10);
    mvg::Mat34 Q;
    Q << streetside::testing::random_rotation(s, 180), Eigen::Vector3d(g(rng), g(rng), g(rng));
    worst_c = std::max(worst_c, (Q * mvg::camera_center(Q).homogeneous()).norm());
  }
  o.check(worst_c <= 1e-10, fmt::format("|P (C,1)| {:.2e} (<= 1e-10)", worst_c));
  return o;
}

// 6 --------------------------------------------------------------------------

Eigen::Vector2d rotate(double deg, const Eigen::Vector2d& p) {
  const double a = deg * std::numbers::pi / 180.0;
  return {std::cos(a) * p.x() - std::sin(a) * p.y(), std::sin(a) * p.x() + std::cos(a) * p.y()};
}

Outcome similarity() {
  Outcome o;
  std::mt19937_64 rng(3);
  // Street scale: panoramas within 100 m, baselines from 1 to 50 m.
  std::uniform_real_distribution<double> sc(1.0, 50.0), ang(-180, 180), u(-100, 100);
  double worst_ctrl = 0, worst_scale = 0, worst_rot = 0, worst_tr = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double scale = sc(rng), rot_deg = ang(rng);
    const Eigen::Vector2d tr(u(rng), u(rng));
    const Eigen::Vector2d a0(u(rng) / 10, u(rng) / 10), a1(u(rng) / 10, u(rng) / 10);
    const Eigen::Vector2d b0 = scale * rotate(rot_deg, a0) + tr, b1 = scale * rotate(rot_deg, a1) + tr;
    const geo::Similarity2D s = geo::fit_similarity_2pt(a0, a1, b0, b1);
    worst_ctrl = std::max({worst_ctrl, (geo::apply_similarity(s, a0) - b0).norm(),
                           (geo::apply_similarity(s, a1) - b1).norm()});
    // Scale and translation are compared relative to their magnitude.
    worst_scale = std::max(worst_scale, std::abs(s.scale - scale) / scale);
    worst_rot = std::max(worst_rot, std::abs(geo::wrap_180(s.rotation_deg - rot_deg)) * std::numbers::pi / 180.0);
    worst_tr = std::max(worst_tr, (s.translation - tr).norm() / (1.0 + tr.norm()));
  }
  o.check(worst_ctrl <= 1e-12, fmt::format("control points {:.2e} m (<= 1e-12)", worst_ctrl));
  o.check(worst_scale <= 1e-12 && worst_rot <= 1e-12 && worst_tr <= 1e-12,
          fmt::format("recovery scale {:.1e} rot {:.1e} rad trans {:.1e} over 1000 (<= 1e-12)", worst_scale,
                      worst_rot, worst_tr));
  return o;
}

// 7 --------------------------------------------------------------------------

struct StandardFixture {
  synthetic::FixtureSpec spec = synthetic::standard_fixture();
  synthetic::FixtureTruth truth = synthetic::fixture_truth(spec);
  fs::path dir = streetside::testing::cached_fixture("north_east", spec);
};

double planar_error_m(const StandardFixture& f, const geo::GeoPoint& x_g) {
  const geo::EnuVec got = geo::geodetic_to_enu(x_g, f.spec.origin);
  return std::hypot(got.e - f.truth.target_enu.e, got.n - f.truth.target_enu.n);
}

Outcome end_to_end(const StandardFixture& f) {
  Outcome o;
  constexpr int kSide = 2048;
  pipeline::ExtractionConfig cfg;
  cfg.threads = 1;
  cfg.download.max_concurrency = 1;
  acquisition::FixtureProvider provider(f.dir);
  auto detector = detection::OracleDetector::from_file(f.dir / "annotations.json", {});
  std::map<std::string, synthetic::CameraPose> poses;
  for (const auto& p : f.spec.panos) poses[p.pano_id] = p.pose;
  synthetic::SceneOracleMatcher oracle(f.spec.scene, poses, f.spec.target);

  const auto t0 = Clock::now();
  pipeline::PanoramaCache cache(provider, cfg.download);
  const auto loc = pipeline::locate(f.truth.target_geo, provider, cache, detector, oracle, cfg);
  const auto views = pipeline::extract_buildings(loc.sequence, loc.location.x_g, cache, detector, cfg);
  const double err = planar_error_m(f, loc.location.x_g);
  o.check(err <= 1.0, fmt::format("X_G {:.3f} m (<= 1.0)", err));

  int centered = 0;
  double worst = 0;
  for (const auto& v : views) {
    if (!v.detection) continue;
    const double off = std::abs(v.detection->bbox.center().x() - kSide / 2.0) / kSide;
    worst = std::max(worst, off);
    centered += off <= 0.02;
  }
  o.check(views.size() == 11 && centered == 11,
          fmt::format("{}/{} views centered, worst {:.2f}% of width (<= 2%)", centered, views.size(), worst * 100));

  mvg::OrbMatcher orb;
  const auto loc_orb = pipeline::localize_building(loc.sequence, loc.input, cache, detector, orb, cfg);
  const double err_orb = planar_error_m(f, loc_orb.x_g);
  o.check(err_orb <= 2.5, fmt::format("X_G with ORB {:.3f} m (<= 2.5)", err_orb));
  const double s = seconds_since(t0);
  o.check(s < 180.0, fmt::format("{:.1f} s single-threaded (< 180 s)", s));
  return o;
}

// 8 --------------------------------------------------------------------------

Outcome evaluation_oracle() {
  using evaluation::ScoredDetection;
  Outcome o;
  const evaluation::GroundTruthSet gt = {{"img", {detection::BBox{0, 0, 10, 10}, detection::BBox{100, 0, 110, 10}}}};
  const detection::BBox targets[3] = {{0, 0, 10, 10}, {100, 0, 110, 10}, {50, 50, 60, 60}};
  int sets = 0, equal = 0;
  double worst = 0;
  for (int len = 1; len <= 6; ++len) {
    int combos = 1;
    for (int i = 0; i < len; ++i) combos *= 3;
    for (int code = 0; code < combos; ++code) {
      std::vector<ScoredDetection> dets;
      std::vector<bool> oracle_labels;
      bool claimed[2] = {false, false};
      for (int i = 0, c = code; i < len; ++i, c /= 3) {
        const int t = c % 3;
        dets.push_back({"img", targets[t], 1.0 - 0.1 * i});
        const bool tp = t < 2 && !claimed[t];
        if (tp) claimed[t] = true;
        oracle_labels.push_back(tp);
      }
      std::vector<bool> labels;
      for (const auto& d : evaluation::match_detections_to_gt(dets, gt)) labels.push_back(d.true_positive);
      const double ap = evaluation::average_precision(evaluation::pr_curve(labels, 2));
      const double exact = streetside::testing::ap_step_oracle(oracle_labels, 2).value();
      worst = std::max(worst, std::abs(ap - exact));
      equal += labels == oracle_labels && std::abs(ap - exact) <= 1e-12;
      ++sets;
    }
  }
  o.check(sets == 1092 && equal == sets,
          fmt::format("{}/{} enumerated sets equal the oracle, worst {:.1e} (<= 1e-12)", equal, sets, worst));
  const double hand = evaluation::average_precision(evaluation::pr_curve({true, false, true}, 2));
  o.check(std::abs(hand - 0.8333) <= 1e-4 && std::abs(hand - 5.0 / 6.0) <= 1e-9,
          fmt::format("[TP,FP,TP] {:.10f} (5/6 +- 1e-9)", hand));
  return o;
}

// 9 --------------------------------------------------------------------------

Outcome exif_parsing() {
  Outcome o;
  const fs::path data = fs::path(STREETSIDE_TEST_DATA) / "exif";
  for (const char* name : {"gps_le.jpg", "gps_be.jpg"}) {
    const auto p = exif::extract_gps(read_file_bytes(data / name));
    const double e = std::max(std::abs(p.lat - 28.08), std::abs(p.lon + 96.99));
    o.check(e <= 1e-7, fmt::format("{} ({:.8f}, {:.8f})", name, p.lat, p.lon));
  }
  std::vector<std::vector<std::uint8_t>> seeds;
  for (const char* name : {"gps_le.jpg", "gps_be.jpg", "exif_no_gps.jpg", "gps_south_east_be.jpg"}) {
    seeds.push_back(read_file_bytes(data / name));
  }
  std::mt19937_64 rng(2024);
  int parsed = 0, rejected = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 100000; ++i) {
    std::vector<std::uint8_t> b = seeds[rng() % seeds.size()];
    for (int e = 0, edits = 1 + int(rng() % 8); e < edits && !b.empty(); ++e) {
      switch (rng() % 5) {
        case 0: b[rng() % b.size()] = static_cast<std::uint8_t>(rng()); break;
        case 1: b[rng() % b.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
        case 2: b.resize(rng() % (b.size() + 1)); break;
        case 3: b.insert(b.begin() + (rng() % (b.size() + 1)), static_cast<std::uint8_t>(rng())); break;
        case 4:
          if (b.size() > 64) b[2 + rng() % 62] = static_cast<std::uint8_t>(rng());
          break;
      }
    }
    try {
      exif::extract_gps(b);
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    }
  }
  const double s = seconds_since(t0);
  o.check(parsed + rejected == 100000 && s < 60.0,
          fmt::format("1e5 mutations: {} parsed, {} rejected, none crashed, {:.2f} s", parsed, rejected, s));
  return o;
}

// 10 -------------------------------------------------------------------------

Outcome determinism(const StandardFixture& f) {
  Outcome o;
  streetside::testing::TempDir tmp("acceptance");
  const fs::path scene = fs::path(STREETSIDE_DATA_DIR) / "fixtures" / "standard";
  const std::string input = fmt::format("{:.9f},{:.9f}", f.truth.target_geo.lat, f.truth.target_geo.lon);
  int codes[2];
  for (int run = 0; run < 2; ++run) {
    const std::string out = (tmp.path() / (run ? "b" : "a")).string();
    const std::string root = "provider.root=" + f.dir.string();
    const std::string ann = "detector.annotations=" + (f.dir / "annotations.json").string();
    const std::string cfg = (scene / "extract.toml").string();
    const char* argv[] = {"streetside", "extract", "--input", input.c_str(), "--config", cfg.c_str(), "--out",
                          out.c_str(),  "--set",   root.c_str(), "--set", ann.c_str(), "--set", "log.level=warn"};
    std::ostringstream so, se;
    codes[run] = cli::cli_main(int(std::size(argv)), argv, so, se);
    if (codes[run] != 0) o.check(false, "extract failed: " + se.str());
  }
  if (codes[0] != 0 || codes[1] != 0) return o;
  int files = 0, same = 0, crops = 0;
  for (const auto& e : fs::directory_iterator(tmp.path() / "a")) {
    ++files;
    crops += e.path().extension() == ".png";
    const fs::path other = tmp.path() / "b" / e.path().filename();
    same += fs::exists(other) && read_file_bytes(e.path()) == read_file_bytes(other);
  }
  int files_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path() / "b")) ++files_b;
  o.check(files == files_b && same == files && crops > 0,
          fmt::format("{}/{} files bit-identical (manifest + {} crops)", same, files, crops));
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  std::optional<StandardFixture> fixture;
  auto standard = [&]() -> const StandardFixture& {
    if (!fixture) fixture.emplace();
    return *fixture;
  };
  const std::vector<Criterion> criteria = {
      {1, "OP reproduction", op_reproduction},
      {2, "stitching", stitching},
      {3, "projection geometry", projection_geometry},
      {4, "five-point + RANSAC", five_point_ransac},
      {5, "triangulation", triangulation},
      {6, "similarity transform", similarity},
      {7, "end-to-end synthetic", [&] { return end_to_end(standard()); }},
      {8, "evaluation oracle", evaluation_oracle},
      {9, "EXIF", exif_parsing},
      {10, "determinism", [&] { return determinism(standard()); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    failed += !o.pass;
    std::string facts;
    for (const auto& f : o.facts) facts += (facts.empty() ? "" : "; ") + f;
    std::cout << fmt::format("{} {:>2} {}: {}", o.pass ? "PASS" : "FAIL", c.id, c.name, facts) << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
