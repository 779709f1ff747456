#include "streetside/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streetside/error.hpp"
#include "streetside/parallel.hpp"

namespace streetside::synthetic {
namespace {

using nlohmann::json;
constexpr double kDegToRad = M_PI / 180.0;

Eigen::Vector3d vec(const geo::EnuVec& v) { return {v.e, v.n, v.u}; }

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int axis = -1;     // 0 width, 1 depth, 2 up
  int sign = 0;      // outward normal direction along axis
  Eigen::Vector3d local;
};

// Box frame: columns are the width, depth and up axes.
Eigen::Matrix3d box_frame(const BoxBuilding& b) {
  Eigen::Matrix3d q;
  q.col(0) = b.width_axis();
  q.col(1) = b.depth_axis();
  q.col(2) = Eigen::Vector3d::UnitZ();
  return q;
}

Eigen::Vector3d box_mid(const BoxBuilding& b) {
  return vec(b.center) + Eigen::Vector3d(0, 0, b.height / 2);
}

// Slab test for a ray starting outside the box. Only hits with t > t_min count.
Hit intersect(const BoxBuilding& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
              double t_min) {
  const Eigen::Matrix3d q = box_frame(b);
  const Eigen::Vector3d ol = q.transpose() * (o - box_mid(b));
  const Eigen::Vector3d dl = q.transpose() * d;
  const Eigen::Vector3d half(b.width / 2, b.depth / 2, b.height / 2);
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1, sign = 0;
  for (int k = 0; k < 3; ++k) {
    if (dl[k] == 0.0) {
      if (std::abs(ol[k]) > half[k]) return {};
      continue;
    }
    double t1 = (-half[k] - ol[k]) / dl[k];
    double t2 = (half[k] - ol[k]) / dl[k];
    int s = -1;
    if (t1 > t2) {
      std::swap(t1, t2);
      s = 1;
    }
    if (t1 > t_near) {
      t_near = t1;
      axis = k;
      sign = s;
    }
    t_far = std::min(t_far, t2);
  }
  if (axis < 0 || t_near > t_far || t_near <= t_min) return {};
  return {t_near, axis, sign, ol + t_near * dl};
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rgb shade(const BoxBuilding& b, std::uint64_t box_key, const Hit& h) {
  const Eigen::Vector3d half(b.width / 2, b.depth / 2, b.height / 2);
  int u_axis = 0, v_axis = 2;
  if (h.axis == 0) u_axis = 1;
  if (h.axis == 2) v_axis = 1;
  const double cu = (h.local[u_axis] + half[u_axis]) / b.texture.cell_m;
  const double cv = (h.local[v_axis] + half[v_axis]) / b.texture.cell_m;
  const auto iu = static_cast<std::int64_t>(std::floor(cu));
  const auto iv = static_cast<std::int64_t>(std::floor(cv));
  const Rgb base = ((iu + iv) & 1) ? b.texture.a : b.texture.b;
  std::uint64_t key = splitmix(box_key);
  key = splitmix(key ^ std::uint64_t(h.axis * 2 + (h.sign > 0)));
  key = splitmix(key ^ std::uint64_t(iu));
  key = splitmix(key ^ std::uint64_t(iv));
  // Per-cell brightness in [0.45, 1.0] so neighbouring corners look different.
  const double k = 0.45 + 0.55 * double(key % 1024) / 1023.0;
  auto scale = [&](std::uint8_t c) { return static_cast<std::uint8_t>(std::lround(c * k)); };
  return {scale(base.r), scale(base.g), scale(base.b)};
}

struct Caster {
  const Scene& scene;

  // Nearest box hit along o + t d for t in (t_min, t_max).
  bool blocked(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double t_min,
               double t_max) const {
    for (const auto* list : {&scene.buildings, &scene.occluders}) {
      for (const auto& b : *list) {
        if (intersect(b, o, d, t_min).t < t_max) return true;
      }
    }
    return false;
  }

  Rgb trace(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
    Hit best;
    const BoxBuilding* box = nullptr;
    std::uint64_t key = 0;
    std::uint64_t index = 0;
    for (const auto* list : {&scene.buildings, &scene.occluders}) {
      for (const auto& b : *list) {
        const Hit h = intersect(b, o, d, 0.0);
        if (h.t < best.t) {
          best = h;
          box = &b;
          key = index;
        }
        ++index;
      }
    }
    if (box) return shade(*box, key, best);
    return d.z() < 0.0 ? scene.ground : scene.sky;
  }
};

bool boxes_overlap(const BoxBuilding& a, const BoxBuilding& b) {
  const double a_lo = a.center.u, a_hi = a.center.u + a.height;
  const double b_lo = b.center.u, b_hi = b.center.u + b.height;
  if (a_hi <= b_lo || b_hi <= a_lo) return false;
  const Eigen::Vector2d axes[4] = {a.width_axis().head<2>(), a.depth_axis().head<2>(),
                                   b.width_axis().head<2>(), b.depth_axis().head<2>()};
  auto radius = [](const BoxBuilding& x, const Eigen::Vector2d& ax) {
    return std::abs(x.width_axis().head<2>().dot(ax)) * x.width / 2 +
           std::abs(x.depth_axis().head<2>().dot(ax)) * x.depth / 2;
  };
  const Eigen::Vector2d delta = vec(b.center).head<2>() - vec(a.center).head<2>();
  for (const auto& ax : axes) {
    if (std::abs(delta.dot(ax)) >= radius(a, ax) + radius(b, ax)) return false;
  }
  return true;
}

json rgb_json(Rgb c) { return json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const json& j) {
  return {j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

json box_json(const BoxBuilding& b) {
  return {{"center", {b.center.e, b.center.n, b.center.u}},
          {"width", b.width},
          {"depth", b.depth},
          {"height", b.height},
          {"yaw_deg", b.yaw_deg},
          {"label", b.label},
          {"texture",
           {{"cell_m", b.texture.cell_m}, {"a", rgb_json(b.texture.a)}, {"b", rgb_json(b.texture.b)}}}};
}

BoxBuilding box_from(const json& j) {
  BoxBuilding b;
  const auto& c = j.at("center");
  b.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  b.width = j.at("width").get<double>();
  b.depth = j.at("depth").get<double>();
  b.height = j.at("height").get<double>();
  b.yaw_deg = j.value("yaw_deg", 0.0);
  b.label = j.value("label", std::string("building"));
  if (j.contains("texture")) {
    const auto& t = j.at("texture");
    b.texture.cell_m = t.value("cell_m", 0.5);
    if (t.contains("a")) b.texture.a = rgb_from(t.at("a"));
    if (t.contains("b")) b.texture.b = rgb_from(t.at("b"));
  }
  return b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

Eigen::Vector3d BoxBuilding::width_axis() const {
  const double y = yaw_deg * kDegToRad;
  return {std::cos(y), -std::sin(y), 0.0};
}

Eigen::Vector3d BoxBuilding::depth_axis() const {
  const double y = yaw_deg * kDegToRad;
  return {std::sin(y), std::cos(y), 0.0};
}

std::array<Eigen::Vector3d, 8> BoxBuilding::corners() const {
  std::array<Eigen::Vector3d, 8> out;
  const Eigen::Vector3d w = width_axis() * (width / 2), d = depth_axis() * (depth / 2);
  const Eigen::Vector3d base = vec(center);
  int i = 0;
  for (double z : {0.0, height}) {
    for (double sw : {-1.0, 1.0}) {
      for (double sd : {-1.0, 1.0}) out[i++] = base + sw * w + sd * d + Eigen::Vector3d(0, 0, z);
    }
  }
  return out;
}

void Scene::validate() const {
  std::vector<const BoxBuilding*> all;
  for (const auto* list : {&buildings, &occluders}) {
    for (const auto& b : *list) {
      if (!(b.width > 0 && b.depth > 0 && b.height > 0 && b.texture.cell_m > 0)) {
        throw Error(Errc::kInvalidScene, "box dimensions and texture cell must be positive");
      }
      all.push_back(&b);
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (boxes_overlap(*all[i], *all[j])) {
        throw Error(Errc::kInvalidScene, fmt::format("boxes {} and {} intersect", i, j));
      }
    }
  }
}

Image render_pano(const Scene& scene, const CameraPose& pose, projection::PanoDims dims,
                  unsigned threads) {
  scene.validate();
  if (!(pose.position.u > 0.0)) throw Error(Errc::kInvalidScene, "camera must be above ground");
  if (dims.width <= 0 || dims.width != 2 * dims.height) {
    throw Error(Errc::kInvalidImage, "panorama must be 2:1");
  }
  const Caster caster{scene};
  const Eigen::Vector3d origin = vec(pose.position);
  Image out(dims.width, dims.height);
  parallel_for(
      std::size_t(dims.height),
      [&](std::size_t row) {
        const int v = static_cast<int>(row);
        for (int u = 0; u < dims.width; ++u) {
          const auto dir = projection::pano_pixel_to_dir(dims, u, v);
          const Eigen::Vector3d d =
              projection::heading_frame_to_enu(projection::dir_to_unit(dir), pose.heading_deg);
          out.set(u, v, caster.trace(origin, d));
        }
      },
      threads);
  return out;
}

Eigen::Matrix3d enu_to_view(const CameraPose& pose, double alpha_deg) {
  Eigen::Matrix3d h;
  for (int k = 0; k < 3; ++k) {
    h.col(k) = projection::enu_to_heading_frame(Eigen::Vector3d::Unit(k), pose.heading_deg);
  }
  return projection::view_to_heading_frame(alpha_deg).transpose() * h;
}

TrueRelativePose relative_pose(const CameraPose& a, double alpha_a, const CameraPose& b,
                               double alpha_b) {
  const Eigen::Matrix3d ra = enu_to_view(a, alpha_a);
  const Eigen::Matrix3d rb = enu_to_view(b, alpha_b);
  return {rb * ra.transpose(), rb * (vec(a.position) - vec(b.position))};
}

std::vector<SurfacePoint> checker_corners(const BoxBuilding& b) {
  std::vector<SurfacePoint> out;
  const Eigen::Matrix3d q = box_frame(b);
  const Eigen::Vector3d half(b.width / 2, b.depth / 2, b.height / 2);
  const Eigen::Vector3d mid = box_mid(b);
  const double cell = b.texture.cell_m;
  // Walls (width and depth faces, both signs) and the roof.
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {-1, 1}) {
      if (axis == 2 && sign < 0) continue;
      const int ua = axis == 0 ? 1 : 0;
      const int va = axis == 2 ? 1 : 2;
      const int nu = static_cast<int>(std::ceil(2 * half[ua] / cell - 1e-9));
      const int nv = static_cast<int>(std::ceil(2 * half[va] / cell - 1e-9));
      for (int i = 1; i < nu; ++i) {
        for (int j = 1; j < nv; ++j) {
          Eigen::Vector3d l;
          l[axis] = sign * half[axis];
          l[ua] = -half[ua] + i * cell;
          l[va] = -half[va] + j * cell;
          out.push_back({mid + q * l, q.col(axis) * sign});
        }
      }
    }
  }
  return out;
}

bool visible_from(const Scene& scene, const SurfacePoint& p, const Eigen::Vector3d& camera) {
  const Eigen::Vector3d to_cam = camera - p.position;
  if (p.normal.dot(to_cam) <= 1e-9) return false;
  return !Caster{scene}.blocked(camera, p.position - camera, 0.0, 1.0 - 1e-7);
}

double visible_fraction(const Scene& scene, std::size_t building, const CameraPose& pose) {
  const Eigen::Vector3d cam = vec(pose.position);
  int facing = 0, seen = 0;
  for (const auto& p : checker_corners(scene.buildings.at(building))) {
    if (p.normal.dot(cam - p.position) <= 1e-9) continue;
    ++facing;
    if (visible_from(scene, p, cam)) ++seen;
  }
  return facing ? double(seen) / facing : 0.0;
}

std::vector<mvg::FeatureMatch> oracle_matches(const Scene& scene, std::size_t target,
                                              const CameraPose& pose_a, double alpha_a,
                                              const CameraPose& pose_b, double alpha_b,
                                              double theta_deg, int side_px) {
  if (target >= scene.buildings.size()) throw Error(Errc::kInvalidScene, "no such target");
  const projection::Intrinsics intr = projection::intrinsics_for(theta_deg, side_px);
  const Eigen::Matrix3d ra = enu_to_view(pose_a, alpha_a), rb = enu_to_view(pose_b, alpha_b);
  const Eigen::Vector3d ca = vec(pose_a.position), cb = vec(pose_b.position);
  auto project = [&](const Eigen::Matrix3d& r, const Eigen::Vector3d& c,
                     const Eigen::Vector3d& x) -> std::optional<Eigen::Vector2d> {
    const Eigen::Vector3d v = r * (x - c);
    if (v.z() <= 1e-9) return std::nullopt;
    const Eigen::Vector2d px(intr.f * v.x() / v.z() + intr.p, intr.f * v.y() / v.z() + intr.p);
    if (px.x() < 0 || px.y() < 0 || px.x() > side_px || px.y() > side_px) return std::nullopt;
    return px;
  };
  std::vector<mvg::FeatureMatch> out;
  for (const auto& p : checker_corners(scene.buildings[target])) {
    if (!visible_from(scene, p, ca) || !visible_from(scene, p, cb)) continue;
    const auto a = project(ra, ca, p.position);
    const auto b = project(rb, cb, p.position);
    if (a && b) out.push_back({*a, *b});
  }
  if (out.size() < 5) {
    throw Error(Errc::kInsufficientFeatures,
                fmt::format("only {} target corners visible in both views", out.size()));
  }
  return out;
}

SceneOracleMatcher::SceneOracleMatcher(Scene scene, std::map<std::string, CameraPose> poses,
                                       std::size_t target)
    : scene_(std::move(scene)), poses_(std::move(poses)), target_(target) {}

std::vector<mvg::FeatureMatch> SceneOracleMatcher::match(const Image& a,
                                                         const detection::ViewContext& ctx_a,
                                                         const Image&,
                                                         const detection::ViewContext& ctx_b) {
  const auto pa = poses_.find(ctx_a.pano_id);
  const auto pb = poses_.find(ctx_b.pano_id);
  if (pa == poses_.end() || pb == poses_.end()) {
    throw Error(Errc::kUnknownImage,
                fmt::format("no pose for '{}' or '{}'", ctx_a.pano_id, ctx_b.pano_id));
  }
  return oracle_matches(scene_, target_, pa->second, ctx_a.alpha_deg, pb->second, ctx_b.alpha_deg,
                        ctx_a.theta_deg, a.width());
}

FixtureTruth fixture_truth(const FixtureSpec& spec) {
  const BoxBuilding& b = spec.scene.buildings.at(spec.target);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : spec.panos) mean += vec(p.pose.position);
  if (!spec.panos.empty()) mean /= double(spec.panos.size());
  const Eigen::Vector3d toward = mean - vec(b.center);
  // Street-facing wall: the one whose outward normal points most at the cameras.
  Eigen::Vector3d best_normal = b.depth_axis();
  double best_half = b.depth / 2, best_dot = -1e300;
  for (const auto& [axis, half] : {std::pair{b.width_axis(), b.width / 2},
                                   std::pair{b.depth_axis(), b.depth / 2}}) {
    for (double s : {-1.0, 1.0}) {
      const double dot = (s * axis).head<2>().dot(toward.head<2>());
      if (dot > best_dot) {
        best_dot = dot;
        best_normal = s * axis;
        best_half = half;
      }
    }
  }
  FixtureTruth truth;
  const Eigen::Vector3d c = vec(b.center) + best_normal * best_half;
  truth.target_enu = {c.x(), c.y(), b.center.u + b.height / 2};
  truth.target_geo = geo::enu_to_geodetic({c.x(), c.y(), 0.0}, spec.origin);
  truth.target_geo.alt.reset();
  for (const auto& p : spec.panos) {
    if (visible_fraction(spec.scene, spec.target, p.pose) < spec.occlusion_threshold) {
      truth.occluded_panos.push_back(p.pano_id);
    }
  }
  return truth;
}

std::string fixture_spec_to_json(const FixtureSpec& spec) {
  json buildings = json::array(), occluders = json::array(), panos = json::array();
  for (const auto& b : spec.scene.buildings) buildings.push_back(box_json(b));
  for (const auto& b : spec.scene.occluders) occluders.push_back(box_json(b));
  for (const auto& p : spec.panos) {
    panos.push_back({{"pano_id", p.pano_id},
                     {"position", {p.pose.position.e, p.pose.position.n, p.pose.position.u}},
                     {"heading_deg", p.pose.heading_deg}});
  }
  const json j = {
      {"scene",
       {{"buildings", buildings},
        {"occluders", occluders},
        {"ground", rgb_json(spec.scene.ground)},
        {"sky", rgb_json(spec.scene.sky)}}},
      {"panos", panos},
      {"origin", {{"lat", spec.origin.lat}, {"lon", spec.origin.lon}}},
      {"grid", {{"cols", spec.grid.cols}, {"rows", spec.grid.rows}, {"tile_px", spec.grid.tile_px}}},
      {"target", spec.target},
      {"occlusion_threshold", spec.occlusion_threshold}};
  return j.dump(2) + "\n";
}

FixtureSpec fixture_spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FixtureSpec spec;
    const auto& s = j.at("scene");
    for (const auto& b : s.at("buildings")) spec.scene.buildings.push_back(box_from(b));
    if (s.contains("occluders")) {
      for (const auto& b : s.at("occluders")) spec.scene.occluders.push_back(box_from(b));
    }
    if (s.contains("ground")) spec.scene.ground = rgb_from(s.at("ground"));
    if (s.contains("sky")) spec.scene.sky = rgb_from(s.at("sky"));
    for (const auto& p : j.at("panos")) {
      const auto& pos = p.at("position");
      spec.panos.push_back({p.at("pano_id").get<std::string>(),
                            {{pos.at(0).get<double>(), pos.at(1).get<double>(),
                              pos.at(2).get<double>()},
                             p.at("heading_deg").get<double>()}});
    }
    if (j.contains("origin")) {
      spec.origin = geo::make_geopoint(j.at("origin").at("lat").get<double>(),
                                       j.at("origin").at("lon").get<double>());
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      spec.grid = {g.at("cols").get<int>(), g.at("rows").get<int>(), g.at("tile_px").get<int>()};
    }
    spec.target = j.value("target", std::size_t(0));
    spec.occlusion_threshold = j.value("occlusion_threshold", 0.5);
    spec.scene.validate();
    if (spec.target >= spec.scene.buildings.size()) {
      throw Error(Errc::kInvalidScene, "target index out of range");
    }
    return spec;
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, std::string("scene file: ") + e.what());
  }
}

FixtureSpec load_fixture_spec(const std::filesystem::path& scene_json) {
  const auto bytes = read_file_bytes(scene_json);
  return fixture_spec_from_json(std::string(bytes.begin(), bytes.end()));
}

FixtureTruth make_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir,
                          unsigned threads) {
  spec.scene.validate();
  if (spec.grid.width() != 2 * spec.grid.height() || spec.grid.tile_px <= 0) {
    throw Error(Errc::kInvalidArgument, "fixture tile grid must describe a 2:1 panorama");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "tiles", ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + (out_dir / "tiles").string() + ": " + ec.message());

  const FixtureTruth truth = fixture_truth(spec);
  std::vector<acquisition::PanoMetadata> metas;
  json annotations = json::object();
  for (const auto& p : spec.panos) {
    acquisition::PanoMetadata m;
    m.pano_id = p.pano_id;
    m.location = geo::enu_to_geodetic({p.pose.position.e, p.pose.position.n, 0.0}, spec.origin);
    m.location.alt.reset();
    m.heading_deg = geo::wrap_360(p.pose.heading_deg);
    m.grid = spec.grid;
    metas.push_back(m);

    json objects = json::array();
    for (std::size_t i = 0; i < spec.scene.buildings.size(); ++i) {
      const auto& b = spec.scene.buildings[i];
      json corners = json::array();
      for (const auto& c : b.corners()) {
        const Eigen::Vector3d rel = c - vec(p.pose.position);
        corners.push_back({rel.x(), rel.y(), rel.z()});
      }
      objects.push_back({{"label", b.label},
                         {"target", i == spec.target},
                         {"occluded", visible_fraction(spec.scene, i, p.pose) <
                                          spec.occlusion_threshold},
                         {"corners_enu", corners}});
    }
    annotations[p.pano_id] = {{"heading_deg", m.heading_deg}, {"objects", objects}};
  }
  write_text(out_dir / "manifest.json", acquisition::to_manifest_json(metas));
  write_text(out_dir / "annotations.json", json{{"panos", annotations}}.dump(2) + "\n");
  write_text(out_dir / "scene.json", fixture_spec_to_json(spec));

  json occluded = json::array();
  for (const auto& id : truth.occluded_panos) occluded.push_back(id);
  const json truth_json = {
      {"target_enu", {truth.target_enu.e, truth.target_enu.n, truth.target_enu.u}},
      {"target", {{"lat", truth.target_geo.lat}, {"lon", truth.target_geo.lon}}},
      {"origin", {{"lat", spec.origin.lat}, {"lon", spec.origin.lon}}},
      {"occluded_panos", occluded}};
  write_text(out_dir / "truth.json", truth_json.dump(2) + "\n");

  const projection::PanoDims dims{spec.grid.width(), spec.grid.height()};
  for (const auto& p : spec.panos) {
    const Image pano = render_pano(spec.scene, p.pose, dims, threads);
    const auto tiles = acquisition::slice_tiles(pano, spec.grid);
    const auto dir = out_dir / "tiles" / p.pano_id;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::kIo, "cannot create " + dir.string() + ": " + ec.message());
    for (int r = 0; r < spec.grid.rows; ++r) {
      for (int c = 0; c < spec.grid.cols; ++c) {
        write_image(dir / fmt::format("{}_{}.png", r, c),
                    tiles[std::size_t(r) * spec.grid.cols + c]);
      }
    }
  }
  return truth;
}

FixtureSpec standard_fixture(const StandardFixtureOptions& opts) {
  if (opts.n < 0 || !(opts.spacing_m > 0) || opts.lateral_m == 0.0 || !(opts.camera_height_m > 0) ||
      (opts.heading_deg != 90.0 && opts.heading_deg != 270.0)) {
    throw Error(Errc::kInvalidArgument, "invalid standard fixture options");
  }
  FixtureSpec spec;
  spec.grid = opts.grid;
  const double side = opts.lateral_m > 0 ? 1.0 : -1.0;
  const double dir = opts.heading_deg == 90.0 ? 1.0 : -1.0;

  BoxBuilding house;
  house.width = opts.building_width_m;
  house.depth = opts.building_depth_m;
  house.height = opts.building_height_m;
  house.yaw_deg = opts.building_yaw_deg;
  const Eigen::Vector3d back = side * house.depth / 2 * house.depth_axis();
  house.center = {back.x(), opts.lateral_m + back.y(), 0.0};
  spec.scene.buildings.push_back(house);

  for (int i = 0; i <= 2 * opts.n; ++i) {
    FixturePano p;
    p.pano_id = fmt::format("pn{:02d}", i);
    p.pose.position = {dir * (i - opts.n) * opts.spacing_m, 0.0, opts.camera_height_m};
    p.pose.heading_deg = opts.heading_deg;
    spec.panos.push_back(p);
  }

  if (opts.occlude_index) {
    const int k = *opts.occlude_index;
    if (k < 0 || k > 2 * opts.n) throw Error(Errc::kInvalidArgument, "occlude_index out of range");
    // A box a third of the way from the camera to the target wall.
    const Eigen::Vector2d cam(dir * (k - opts.n) * opts.spacing_m, 0.0);
    const Eigen::Vector2d wall(0.0, opts.lateral_m);
    const Eigen::Vector2d at = cam + 0.35 * (wall - cam);
    BoxBuilding blocker;
    blocker.width = 4.0;
    blocker.depth = 1.0;
    blocker.height = house.height;
    blocker.center = {at.x(), at.y(), 0.0};
    blocker.label = "occluder";
    blocker.texture = {0.25, Rgb{40, 110, 50}, Rgb{70, 150, 80}};
    spec.scene.occluders.push_back(blocker);
  }
  spec.scene.validate();
  return spec;
}

}  // namespace streetside::synthetic
