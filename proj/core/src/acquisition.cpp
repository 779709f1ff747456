#include "streetside/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "streetside/error.hpp"
#include "streetside/parallel.hpp"

namespace streetside::acquisition {
namespace {

using nlohmann::json;

const char* convention_name(HeadingConvention c) {
  return c == HeadingConvention::kLeftEdge ? "left-edge" : "center-column";
}

PanoMetadata parse_record(const json& r) {
  PanoMetadata m;
  m.pano_id = r.at("pano_id").get<std::string>();
  if (m.pano_id.empty()) throw Error(Errc::kParse, "empty pano_id");
  const double lat = r.at("lat").get<double>();
  const double lon = r.at("lon").get<double>();
  std::optional<double> alt;
  if (r.contains("alt") && !r.at("alt").is_null()) alt = r.at("alt").get<double>();
  try {
    m.location = geo::make_geopoint(lat, lon, alt);
  } catch (const Error& e) {
    throw Error(Errc::kParse, fmt::format("pano {}: {}", m.pano_id, e.what()));
  }
  const double heading = r.at("heading_deg").get<double>();
  if (!std::isfinite(heading)) throw Error(Errc::kParse, "pano " + m.pano_id + ": bad heading");
  m.heading_deg = geo::wrap_360(heading);
  m.grid = {r.at("cols").get<int>(), r.at("rows").get<int>(), r.at("tile_px").get<int>()};
  if (m.grid.cols <= 0 || m.grid.rows <= 0 || m.grid.tile_px <= 0) {
    throw Error(Errc::kParse, "pano " + m.pano_id + ": tile grid must be positive");
  }
  const std::string conv = r.value("heading_convention", std::string("center-column"));
  if (conv == "center-column") {
    m.convention = HeadingConvention::kCenterColumn;
  } else if (conv == "left-edge") {
    m.convention = HeadingConvention::kLeftEdge;
  } else {
    throw Error(Errc::kParse, "pano " + m.pano_id + ": unknown heading_convention " + conv);
  }
  if (r.contains("capture_date") && !r.at("capture_date").is_null()) {
    m.capture_date = r.at("capture_date").get<std::string>();
  }
  return m;
}

bool closer(const PanoMetadata& a, double da, const PanoMetadata& b, double db) {
  return da != db ? da < db : a.pano_id < b.pano_id;
}

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

std::vector<std::uint8_t> fetch_with_retry(Provider& provider, const PanoMetadata& meta, int row,
                                           int col, const RetryPolicy& policy) {
  const auto& sleep = policy.sleep ? policy.sleep : default_sleep;
  auto backoff = policy.initial_backoff;
  const int attempts = std::max(1, policy.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return provider.fetch_tile(meta, row, col);
    } catch (const Error& e) {
      if (e.code() != Errc::kTransientFetch) throw;
      if (attempt >= attempts) {
        throw Error(Errc::kFetchFailed,
                    fmt::format("tile ({},{}) of {} failed after {} attempts: {}", row, col,
                                meta.pano_id, attempts, e.what()));
      }
      spdlog::debug("tile ({},{}) of {}: attempt {} failed, retrying", row, col, meta.pano_id,
                    attempt);
      sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(std::llround(double(backoff.count()) * policy.multiplier)));
    }
  }
}

}  // namespace

std::vector<PanoMetadata> parse_manifest(const std::string& json_text) {
  try {
    const json doc = json::parse(json_text);
    const json& list = doc.at("panos");
    if (!list.is_array()) throw Error(Errc::kParse, "'panos' is not an array");
    std::vector<PanoMetadata> out;
    out.reserve(list.size());
    for (const auto& r : list) out.push_back(parse_record(r));
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed manifest: ") + e.what());
  }
}

std::string to_manifest_json(const std::vector<PanoMetadata>& panos) {
  json list = json::array();
  for (const auto& m : panos) {
    json r = {{"pano_id", m.pano_id},
              {"lat", m.location.lat},
              {"lon", m.location.lon},
              {"heading_deg", m.heading_deg},
              {"cols", m.grid.cols},
              {"rows", m.grid.rows},
              {"tile_px", m.grid.tile_px},
              {"heading_convention", convention_name(m.convention)}};
    if (m.location.alt) r["alt"] = *m.location.alt;
    if (m.capture_date) r["capture_date"] = *m.capture_date;
    list.push_back(std::move(r));
  }
  return json{{"panos", list}}.dump(2) + "\n";
}

FixtureProvider::FixtureProvider(std::filesystem::path root) : root_(std::move(root)) {
  auto path = root_ / "manifest.json";
  if (std::filesystem::is_regular_file(root_)) {
    path = root_;
    root_ = root_.parent_path();
  }
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  panos_ = parse_manifest(ss.str());
}

std::vector<PanoMetadata> FixtureProvider::list_near(const geo::GeoPoint&, double) {
  return panos_;
}

std::vector<std::uint8_t> FixtureProvider::fetch_tile(const PanoMetadata& meta, int row,
                                                      int col) {
  const bool known = std::any_of(panos_.begin(), panos_.end(),
                                 [&](const PanoMetadata& m) { return m.pano_id == meta.pano_id; });
  if (!known) throw Error(Errc::kNotFound, "unknown pano_id " + meta.pano_id);
  const auto path = root_ / "tiles" / meta.pano_id / fmt::format("{}_{}.png", row, col);
  if (!std::filesystem::exists(path)) {
    throw Error(Errc::kIncompleteGrid,
                fmt::format("pano {}: tile ({},{}) missing", meta.pano_id, row, col));
  }
  return read_file_bytes(path);
}

std::vector<PanoMetadata> fetch_nearby(Provider& provider, const geo::GeoPoint& around,
                                       double radius_m) {
  if (!(radius_m > 0.0)) throw Error(Errc::kInvalidArgument, "radius must be positive");
  std::vector<std::pair<double, PanoMetadata>> hits;
  std::set<std::string> seen;
  for (auto& m : provider.list_near(around, radius_m)) {
    const double d = geo::great_circle_distance_m(around, m.location);
    if (d <= radius_m && seen.insert(m.pano_id).second) hits.emplace_back(d, std::move(m));
  }
  if (hits.empty()) {
    throw Error(Errc::kNoCoverage,
                fmt::format("no panoramas within {} m of ({}, {})", radius_m, around.lat,
                            around.lon));
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return closer(a.second, a.first, b.second, b.first);
  });
  std::vector<PanoMetadata> out;
  out.reserve(hits.size());
  for (auto& h : hits) out.push_back(std::move(h.second));
  return out;
}

PanoSequence select_sequence(const std::vector<PanoMetadata>& metas_in,
                             const geo::GeoPoint& input, const SequenceOptions& opts) {
  if (metas_in.empty()) throw Error(Errc::kEmptyInput, "no panorama metadata to select from");
  if (opts.n < 0) throw Error(Errc::kInvalidArgument, "n must be non-negative");

  // Canonical order first so every floating-point sum below is independent
  // of the caller's ordering.
  std::vector<PanoMetadata> metas = metas_in;
  std::sort(metas.begin(), metas.end(),
            [](const auto& a, const auto& b) { return a.pano_id < b.pano_id; });
  metas.erase(std::unique(metas.begin(), metas.end(),
                          [](const auto& a, const auto& b) { return a.pano_id == b.pano_id; }),
              metas.end());

  std::size_t c = 0;
  double best = geo::great_circle_distance_m(input, metas[0].location);
  for (std::size_t i = 1; i < metas.size(); ++i) {
    const double d = geo::great_circle_distance_m(input, metas[i].location);
    if (closer(metas[i], d, metas[c], best)) {
      c = i;
      best = d;
    }
  }
  const PanoMetadata pn0 = metas[c];

  std::vector<Eigen::Vector2d> pos(metas.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < metas.size(); ++i) {
    pos[i] = geo::geodetic_to_enu(metas[i].location, pn0.location).planar();
    scatter += pos[i] * pos[i].transpose();
  }
  const double h = pn0.heading_deg * M_PI / 180.0;
  const Eigen::Vector2d heading_dir(std::sin(h), std::cos(h));
  Eigen::Vector2d axis = heading_dir;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  if (eig.eigenvalues()(1) > 1e-6) {
    axis = eig.eigenvectors().col(1).normalized();
    const double along = axis.dot(heading_dir);
    if (along < -1e-9 || (std::abs(along) <= 1e-9 && (axis.x() < 0 || (axis.x() == 0 && axis.y() < 0)))) {
      axis = -axis;
    }
  }

  std::vector<std::size_t> order(metas.size());
  std::vector<double> s(metas.size());
  for (std::size_t i = 0; i < metas.size(); ++i) {
    order[i] = i;
    s[i] = pos[i].dot(axis);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s[a] != s[b] ? s[a] < s[b] : metas[a].pano_id < metas[b].pano_id;
  });
  const std::size_t at = std::find(order.begin(), order.end(), c) - order.begin();
  const std::size_t lo = at >= std::size_t(opts.n) ? at - opts.n : 0;
  const std::size_t hi = std::min(order.size(), at + opts.n + 1);

  PanoSequence seq;
  seq.n = opts.n;
  seq.center_index = at - lo;
  for (std::size_t k = lo; k < hi; ++k) {
    seq.panos.push_back(metas[order[k]]);
    seq.route_m.push_back(s[order[k]]);
  }
  for (std::size_t k = 1; k < seq.panos.size(); ++k) {
    const double gap =
        geo::great_circle_distance_m(seq.panos[k - 1].location, seq.panos[k].location);
    if (gap > opts.spacing_warn_m) {
      seq.warnings.push_back(fmt::format("panoramas {} and {} are {:.1f} m apart",
                                         seq.panos[k - 1].pano_id, seq.panos[k].pano_id, gap));
      spdlog::warn("sparse coverage: {}", seq.warnings.back());
    }
  }
  return seq;
}

Image stitch_tiles(const std::vector<std::optional<Image>>& tiles, const TileGrid& grid) {
  if (grid.cols <= 0 || grid.rows <= 0 || grid.tile_px <= 0) {
    throw Error(Errc::kInvalidArgument, "tile grid must be positive");
  }
  if (tiles.size() != std::size_t(grid.cols) * grid.rows) {
    throw Error(Errc::kIncompleteGrid,
                fmt::format("expected {} tiles, got {}", grid.cols * grid.rows, tiles.size()));
  }
  Image out(grid.width(), grid.height());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto& t = tiles[std::size_t(r) * grid.cols + c];
      if (!t) throw Error(Errc::kIncompleteGrid, fmt::format("tile ({},{}) missing", r, c));
      if (t->width() != grid.tile_px || t->height() != grid.tile_px) {
        throw Error(Errc::kTileSizeMismatch,
                    fmt::format("tile ({},{}) is {}x{}, expected {} px", r, c, t->width(),
                                t->height(), grid.tile_px));
      }
      out.paste(*t, c * grid.tile_px, r * grid.tile_px);
    }
  }
  return out;
}

std::vector<Image> slice_tiles(const Image& pano, const TileGrid& grid) {
  if (pano.width() != grid.width() || pano.height() != grid.height()) {
    throw Error(Errc::kTileSizeMismatch, "panorama size does not match the tile grid");
  }
  std::vector<Image> out;
  out.reserve(std::size_t(grid.cols) * grid.rows);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      out.push_back(pano.crop(c * grid.tile_px, r * grid.tile_px, grid.tile_px, grid.tile_px));
    }
  }
  return out;
}

Image roll_columns(const Image& img, int dx) {
  const int w = img.width();
  if (w == 0) return img;
  dx = ((dx % w) + w) % w;
  if (dx == 0) return img;
  Image out(w, img.height());
  for (int y = 0; y < img.height(); ++y) {
    const std::uint8_t* src = img.row(y);
    std::uint8_t* dst = out.row(y);
    std::copy(src, src + std::size_t(w - dx) * 3, dst + std::size_t(dx) * 3);
    std::copy(src + std::size_t(w - dx) * 3, src + std::size_t(w) * 3, dst);
  }
  return out;
}

Panorama download_panorama(Provider& provider, const PanoMetadata& meta,
                           const DownloadOptions& opts) {
  const TileGrid& g = meta.grid;
  if (g.cols <= 0 || g.rows <= 0 || g.tile_px <= 0) {
    throw Error(Errc::kInvalidArgument, "pano " + meta.pano_id + ": tile grid must be positive");
  }
  std::vector<std::optional<Image>> tiles(std::size_t(g.cols) * g.rows);
  parallel_for(
      tiles.size(),
      [&](std::size_t i) {
        const int r = int(i) / g.cols, c = int(i) % g.cols;
        tiles[i] = decode_image(fetch_with_retry(provider, meta, r, c, opts.retry));
      },
      std::max(1u, opts.max_concurrency));
  Panorama pano{meta, stitch_tiles(tiles, g)};
  if (meta.convention == HeadingConvention::kLeftEdge) {
    pano.image = roll_columns(pano.image, pano.image.width() / 2);
    pano.meta.convention = HeadingConvention::kCenterColumn;
  }
  return pano;
}

}  // namespace streetside::acquisition
