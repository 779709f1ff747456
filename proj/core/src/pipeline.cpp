#include "streetside/pipeline.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetside/error.hpp"
#include "streetside/exif.hpp"
#include "streetside/parallel.hpp"

namespace streetside::pipeline {
namespace {

using acquisition::PanoMetadata;
using nlohmann::json;

// Runs fn, tagging any untagged Error with the pipeline step it came from.
template <typename Fn>
auto in_step(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (!e.step().empty()) throw;
    throw Error(e.code(), e.what(), name);
  }
}

double bearing_from(const PanoMetadata& pano, const geo::GeoPoint& target) {
  const geo::EnuVec v = geo::geodetic_to_enu(target, pano.location);
  if (v.e == 0.0 && v.n == 0.0) {
    throw Error(Errc::kUndefinedSide,
                fmt::format("point coincides with panorama {}", pano.pano_id));
  }
  return geo::bearing_deg({}, v);
}

detection::ViewContext context_for(const std::string& pano_id, double alpha, double theta) {
  return {fmt::format("{}@{:.6f}", pano_id, alpha), pano_id, alpha, theta};
}

json bbox_json(const detection::BBox& b) {
  return {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

json optional_count(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void ExtractionConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kConfig, what); };
  if (n < 1) fail("n must be at least 1");
  if (!(theta_deg > 0.0 && theta_deg < 180.0)) fail("theta must lie in (0, 180)");
  if (out_side <= 0) fail("out_side must be positive");
  for (double t : {detect_threshold, detect_retry_threshold, crop_threshold, nms_iou}) {
    if (!(t >= 0.0 && t <= 1.0)) fail("thresholds must lie in [0, 1]");
  }
  if (!(min_bbox_side >= 0.0)) fail("min_bbox_side must be non-negative");
  if (!(ransac.pixel_threshold > 0.0)) fail("ransac pixel threshold must be positive");
  if (!(ransac.confidence > 0.0 && ransac.confidence < 1.0)) fail("ransac confidence must lie in (0, 1)");
  if (ransac.max_iterations <= 0) fail("ransac max_iterations must be positive");
  if (!(search_radius_m > 0.0)) fail("search radius must be positive");
  if (!(spacing_warn_m > 0.0)) fail("spacing warning threshold must be positive");
  if (theta_deg >= 120.0) spdlog::warn("field of view {} deg distorts the image edges", theta_deg);
}

std::size_t ExtractionResult::crop_count() const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.crop.has_value();
  return n;
}

int front_heading_side(const PanoMetadata& pano, const geo::GeoPoint& input) {
  const double delta = geo::wrap_360(bearing_from(pano, input) - pano.heading_deg);
  return delta > 0.0 && delta < 180.0 ? 90 : 270;
}

double optimal_azimuth(const PanoMetadata& pano, const geo::GeoPoint& x_g) {
  return geo::wrap_360(bearing_from(pano, x_g) - pano.heading_deg);
}

PanoramaCache::PanoramaCache(acquisition::Provider& provider, acquisition::DownloadOptions opts)
    : provider_(provider), opts_(std::move(opts)) {}

std::shared_ptr<const acquisition::Panorama> PanoramaCache::get(const PanoMetadata& meta) {
  std::promise<std::shared_ptr<const acquisition::Panorama>> promise;
  Entry entry;
  bool owner = false;
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(meta.pano_id); it != entries_.end()) {
      entry = it->second;
    } else {
      entry = promise.get_future().share();
      entries_.emplace(meta.pano_id, entry);
      owner = true;
    }
  }
  if (owner) {
    try {
      spdlog::debug("downloading panorama {}", meta.pano_id);
      promise.set_value(std::make_shared<const acquisition::Panorama>(
          acquisition::download_panorama(provider_, meta, opts_)));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return entry.get();
}

void PanoramaCache::put(acquisition::Panorama pano) {
  std::promise<std::shared_ptr<const acquisition::Panorama>> promise;
  const std::string id = pano.meta.pano_id;
  promise.set_value(std::make_shared<const acquisition::Panorama>(std::move(pano)));
  std::lock_guard lock(mu_);
  entries_[id] = promise.get_future().share();
}

BuildingLocation localize_building(const acquisition::PanoSequence& seq,
                                   const geo::GeoPoint& input, PanoramaCache& panos,
                                   detection::Detector& detector, mvg::FeatureMatcher& matcher,
                                   const ExtractionConfig& cfg, Diagnostics* diag_out) {
  Diagnostics local;
  Diagnostics& diag = diag_out ? *diag_out : local;
  if (seq.panos.empty()) throw Error(Errc::kEmptyInput, "empty panorama sequence", "select");
  const std::size_t ci = seq.center_index;
  const PanoMetadata& m0 = seq.center();
  const std::optional<std::size_t> minus = ci > 0 ? std::optional(ci - 1) : std::nullopt;
  const std::optional<std::size_t> plus =
      ci + 1 < seq.panos.size() ? std::optional(ci + 1) : std::nullopt;
  if (!minus && !plus) {
    throw Error(Errc::kNeighborRequired, "localization needs PN_-1 or PN_+1", "select");
  }

  // Step 3: front-heading views.
  const int side = in_step("side", [&] { return front_heading_side(m0, input); });
  diag.side_deg = side;
  auto render = [&](const PanoMetadata& m) {
    const auto pano = in_step("acquire", [&] { return panos.get(m); });
    return in_step("project", [&] {
      return projection::render_rectilinear(pano->image, side, cfg.theta_deg, cfg.out_side,
                                            cfg.threads);
    });
  };
  spdlog::info("[step 3 project] front-heading side {} for {}", side, m0.pano_id);
  const projection::RectilinearView rt0 = render(m0);
  const auto ctx0 = context_for(m0.pano_id, side, cfg.theta_deg);

  // Step 4: the target in RT_0.
  const detection::BBox bbox0 = in_step("detect", [&] {
    const auto kept = detection::nms(detector.detect(rt0.image, ctx0), cfg.nms_iou);
    auto pass = detection::filter_by_score(kept, cfg.detect_threshold);
    diag.detect_threshold_used = cfg.detect_threshold;
    if (pass.empty()) {
      spdlog::info("[step 4 detect] nothing at {}, retrying at {}", cfg.detect_threshold,
                   cfg.detect_retry_threshold);
      pass = detection::filter_by_score(kept, cfg.detect_retry_threshold);
      diag.detect_threshold_used = cfg.detect_retry_threshold;
    }
    if (pass.empty()) {
      throw Error(Errc::kNoBuildingFound, "no building detected in RT_0 of " + m0.pano_id);
    }
    return detection::select_center_bbox(pass, cfg.out_side, cfg.out_side).bbox;
  });
  diag.bbox0 = bbox0;

  // Step 5: match against both neighbors, keep the richer pair (ties: +1).
  std::vector<mvg::FeatureMatch> best;
  std::size_t best_index = 0;
  for (const auto& [index, offset] : {std::pair{plus, 1}, std::pair{minus, -1}}) {
    if (!index) continue;
    const PanoMetadata& mk = seq.panos[*index];
    const projection::RectilinearView rtk = render(mk);
    std::vector<mvg::FeatureMatch> ms;
    in_step("match", [&] {
      try {
        ms = matcher.match(rt0.image, ctx0, rtk.image, context_for(mk.pano_id, side, cfg.theta_deg));
      } catch (const Error& e) {
        if (e.code() != Errc::kInsufficientFeatures) throw;
        spdlog::info("[step 5 match] {} vs {}: {}", m0.pano_id, mk.pano_id, e.what());
      }
    });
    (offset > 0 ? diag.matches_plus : diag.matches_minus) = ms.size();
    spdlog::info("[step 5 match] {} vs {}: {} matches", m0.pano_id, mk.pano_id, ms.size());
    // +1 is visited first, so -1 only wins with strictly more matches.
    if (diag.chosen_offset == 0 || ms.size() > best.size()) {
      best = std::move(ms);
      best_index = *index;
      diag.chosen_offset = offset;
    }
  }
  if (best.size() < 5) {
    throw Error(Errc::kInsufficientMatches,
                fmt::format("{} matches with the best neighbor", best.size()), "match");
  }
  const PanoMetadata& mc = seq.panos[best_index];
  diag.chosen_pano_id = mc.pano_id;

  // Step 6: relative pose.
  const Eigen::Matrix3d K = projection::intrinsic_matrix(rt0.intrinsics);
  std::vector<mvg::NormalizedMatch> nm;
  mvg::RansacResult rr;
  mvg::RelativePose pose;
  in_step("estimate", [&] {
    nm = mvg::normalize_matches(best, K);
    rr = mvg::ransac_essential(nm, cfg.ransac, rt0.intrinsics.f);
    std::vector<mvg::NormalizedMatch> inl;
    for (auto i : rr.inliers) inl.push_back(nm[i]);
    pose = mvg::decompose_essential(rr.E, inl);
  });
  diag.inliers = rr.inliers.size();
  diag.ransac_iterations = rr.iterations;
  diag.positive_depth = pose.positive_depth;
  spdlog::info("[step 6 estimate] {} inliers of {} after {} iterations", rr.inliers.size(), nm.size(),
               rr.iterations);

  // Step 7: X_B, the triangulated inlier nearest the bbox center.
  const mvg::Mat34 P0 = mvg::Mat34::Identity();
  const mvg::Mat34 Pc = pose.projection();
  const Eigen::Vector3d x_b = in_step("triangulate", [&] {
    std::vector<mvg::TriangulatedMatch> pts;
    for (auto i : rr.inliers) {
      try {
        const Eigen::Vector3d X = mvg::triangulate_linear(P0, Pc, nm[i]);
        if (X.z() <= 0.0 || (pose.R * X + pose.t).z() <= 0.0) continue;
        pts.push_back({best[i].pt0, X});
      } catch (const Error& e) {
        if (e.code() != Errc::kTriangulationDegenerate) throw;
      }
    }
    return pts[mvg::pick_building_point(pts, bbox0)].point;
  });

  // Step 8: planar similarity from camera-0 (x, z) to ENU around PN_0.
  BuildingLocation loc;
  loc.x_b = x_b;
  in_step("transform", [&] {
    const Eigen::Vector3d cc = mvg::camera_center(Pc);
    spdlog::debug("[step 7 triangulate] camera-c center ({:.4f}, {:.4f}, {:.4f}), X_B ({:.4f}, {:.4f}, {:.4f})",
                  cc.x(), cc.y(), cc.z(), x_b.x(), x_b.y(), x_b.z());
    const Eigen::Vector2d b1 = geo::geodetic_to_enu(mc.location, m0.location).planar();
    diag.transform = geo::fit_similarity_2pt({0, 0}, {cc.x(), cc.z()}, {0, 0}, b1);
    const Eigen::Vector2d xy = geo::apply_similarity(diag.transform, {x_b.x(), x_b.z()});
    loc.enu = {xy.x(), xy.y(), 0.0};
    loc.x_g = geo::enu_to_geodetic(loc.enu, m0.location);
    loc.x_g.alt.reset();
  });
  spdlog::info("[step 8 transform] X_G = ({:.7f}, {:.7f}), {:.2f} m E, {:.2f} m N of {}", loc.x_g.lat,
               loc.x_g.lon, loc.enu.e, loc.enu.n, m0.pano_id);

  try {
    const double az = optimal_azimuth(m0, loc.x_g);
    const double off = std::abs(geo::wrap_180(az - side));
    if (off > cfg.side_consistency_deg) {
      diag.warnings.push_back(fmt::format(
          "localized azimuth {:.1f} is {:.1f} deg from the front-heading side {}", az, off, side));
      spdlog::warn("{}", diag.warnings.back());
    }
  } catch (const Error&) {
    diag.warnings.push_back("building localized on top of PN_0");
  }
  return loc;
}

std::vector<ViewResult> extract_buildings(const acquisition::PanoSequence& seq,
                                          const geo::GeoPoint& x_g, PanoramaCache& panos,
                                          detection::Detector& detector,
                                          const ExtractionConfig& cfg) {
  std::vector<ViewResult> out(seq.panos.size());
  const unsigned threads = cfg.threads == 0 ? default_thread_count() : cfg.threads;
  parallel_for(
      out.size(),
      [&](std::size_t i) {
        const PanoMetadata& m = seq.panos[i];
        ViewResult& v = out[i];
        v.pano_id = m.pano_id;
        try {
          v.alpha_deg = optimal_azimuth(m, x_g);
          const auto pano = panos.get(m);
          v.view = projection::render_rectilinear(pano->image, v.alpha_deg, cfg.theta_deg,
                                                  cfg.out_side, 1);
          v.view.pano_id = m.pano_id;
          const auto raw =
              detector.detect(v.view.image, context_for(m.pano_id, v.alpha_deg, cfg.theta_deg));
          const auto kept = detection::filter_by_min_side(
              detection::filter_by_score(detection::nms(raw, cfg.nms_iou), cfg.crop_threshold),
              cfg.min_bbox_side);
          if (kept.empty()) {
            v.note = "no detection passed the crop filters";
            return;
          }
          v.detection = detection::select_center_bbox(kept, cfg.out_side, cfg.out_side);
          const auto r = detection::outward_rect(v.detection->bbox, cfg.out_side, cfg.out_side);
          v.crop_rect = r;
          v.crop = v.view.image.crop(r.x, r.y, r.w, r.h);
        } catch (const Error& e) {
          v.note = e.what();
        }
      },
      threads);
  for (const auto& v : out) {
    if (v.crop) {
      spdlog::info("[step 12 crop] {} alpha {:.2f}: crop {}x{}", v.pano_id, v.alpha_deg,
                   v.crop->width(), v.crop->height());
    } else {
      spdlog::info("[step 12 crop] {} alpha {:.2f}: no crop ({})", v.pano_id, v.alpha_deg, v.note);
    }
  }
  return out;
}

std::string crop_file_name(const std::string& pano_id, double alpha_deg) {
  return fmt::format("{}_{:.2f}.png", pano_id, alpha_deg);
}

namespace {

json diagnostics_json(const Diagnostics& d, const BuildingLocation& loc) {
  return {{"side_deg", d.side_deg},
          {"chosen_offset", d.chosen_offset},
          {"chosen_pano_id", d.chosen_pano_id},
          {"matches_minus", optional_count(d.matches_minus)},
          {"matches_plus", optional_count(d.matches_plus)},
          {"inliers", d.inliers},
          {"ransac_iterations", d.ransac_iterations},
          {"positive_depth", d.positive_depth},
          {"detect_threshold_used", d.detect_threshold_used},
          {"bbox0", bbox_json(d.bbox0)},
          {"transform",
           {{"scale", d.transform.scale},
            {"rotation_deg", d.transform.rotation_deg},
            {"translation", {d.transform.translation.x(), d.transform.translation.y()}}}},
          {"x_b", {loc.x_b.x(), loc.x_b.y(), loc.x_b.z()}},
          {"enu", {loc.enu.e, loc.enu.n}},
          {"warnings", d.warnings}};
}

json latlon(const geo::GeoPoint& g) { return {{"lat", g.lat}, {"lon", g.lon}}; }

}  // namespace

std::string run_manifest_json(const geo::GeoPoint& input, const ExtractionResult& r) {
  json views = json::array();
  for (const auto& v : r.views) {
    json jv = {{"pano_id", v.pano_id}, {"alpha_deg", v.alpha_deg}};
    jv["bbox"] = v.detection ? bbox_json(v.detection->bbox) : json(nullptr);
    jv["score"] = v.detection ? json(v.detection->score) : json(nullptr);
    jv["crop_path"] = v.crop ? json(crop_file_name(v.pano_id, v.alpha_deg)) : json(nullptr);
    if (!v.note.empty()) jv["note"] = v.note;
    views.push_back(std::move(jv));
  }
  json diag = diagnostics_json(r.diagnostics, r.building_location);
  diag["crops"] = r.crop_count();
  const json doc = {{"input", latlon(input)},
                    {"x_g", latlon(r.building_location.x_g)},
                    {"views", views},
                    {"diagnostics", diag}};
  return doc.dump(2) + "\n";
}

std::string localization_json(const Localization& loc) {
  const json doc = {{"input", latlon(loc.input)},
                    {"x_g", latlon(loc.location.x_g)},
                    {"pano_0", loc.sequence.center().pano_id},
                    {"diagnostics", diagnostics_json(loc.diagnostics, loc.location)}};
  return doc.dump(2) + "\n";
}

void persist(const geo::GeoPoint& input, const ExtractionResult& result,
             const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& v : result.views) {
    if (v.crop) write_image(out_dir / crop_file_name(v.pano_id, v.alpha_deg), *v.crop);
  }
  const std::string doc = run_manifest_json(input, result);
  write_file_bytes(out_dir / "run_manifest.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(doc.data()), doc.size()));
}

geo::GeoPoint resolve_input(const RunInput& input) {
  return in_step("input", [&] {
    if (const auto* p = std::get_if<geo::GeoPoint>(&input)) return geo::make_geopoint(p->lat, p->lon);
    const geo::GeoPoint g = exif::extract_gps(std::get<std::vector<std::uint8_t>>(input));
    return geo::make_geopoint(g.lat, g.lon);
  });
}

Localization locate(const RunInput& input, acquisition::Provider& provider, PanoramaCache& panos,
                    detection::Detector& detector, mvg::FeatureMatcher& matcher,
                    const ExtractionConfig& cfg) {
  in_step("config", [&] { cfg.validate(); });
  Localization out;
  out.input = resolve_input(input);
  spdlog::info("[step 1 input] ({:.7f}, {:.7f})", out.input.lat, out.input.lon);

  const auto metas = in_step(
      "acquire", [&] { return acquisition::fetch_nearby(provider, out.input, cfg.search_radius_m); });
  out.sequence = in_step("select", [&] {
    return acquisition::select_sequence(metas, out.input, {cfg.n, cfg.spacing_warn_m});
  });
  spdlog::info("[step 2 select] {} panoramas, PN_0 = {}", out.sequence.panos.size(),
               out.sequence.center().pano_id);
  out.diagnostics.warnings = out.sequence.warnings;
  out.location = localize_building(out.sequence, out.input, panos, detector, matcher, cfg,
                                   &out.diagnostics);
  return out;
}

ExtractionResult run(const RunInput& input, acquisition::Provider& provider,
                     detection::Detector& detector, mvg::FeatureMatcher& matcher,
                     const ExtractionConfig& cfg,
                     const std::optional<std::filesystem::path>& out_dir) {
  PanoramaCache cache(provider, cfg.download);
  Localization loc = locate(input, provider, cache, detector, matcher, cfg);
  ExtractionResult result;
  result.building_location = loc.location;
  result.diagnostics = std::move(loc.diagnostics);
  result.views = in_step("extract", [&] {
    return extract_buildings(loc.sequence, result.building_location.x_g, cache, detector, cfg);
  });
  if (out_dir) in_step("persist", [&] { persist(loc.input, result, *out_dir); });
  return result;
}

}  // namespace streetside::pipeline
