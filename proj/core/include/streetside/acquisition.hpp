#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streetside/geo.hpp"
#include "streetside/image.hpp"

namespace streetside::acquisition {

struct TileGrid {
  int cols = 0;
  int rows = 0;
  int tile_px = 0;

  int width() const noexcept { return cols * tile_px; }
  int height() const noexcept { return rows * tile_px; }
  bool operator==(const TileGrid&) const = default;
};

/// Where the heading direction sits in a provider's panorama raster.
enum class HeadingConvention { kCenterColumn, kLeftEdge };

struct PanoMetadata {
  std::string pano_id;
  geo::GeoPoint location;
  double heading_deg = 0.0;  ///< clockwise from North, [0, 360)
  std::optional<std::string> capture_date;
  TileGrid grid;
  HeadingConvention convention = HeadingConvention::kCenterColumn;
};

/// Image is always stored with the heading at the center column.
struct Panorama {
  PanoMetadata meta;
  Image image;
};

struct PanoSequence {
  std::vector<PanoMetadata> panos;
  std::size_t center_index = 0;
  int n = 0;
  /// Signed route coordinate of each pano, meters, PN_0 at zero.
  std::vector<double> route_m;
  std::vector<std::string> warnings;

  const PanoMetadata& center() const { return panos.at(center_index); }
};

/// Provider contract. Implementations must be safe for concurrent calls.
/// fetch_tile throws Errc::kTransientFetch for retryable failures and
/// Errc::kNotFound when the pano or tile does not exist.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::vector<PanoMetadata> list_near(const geo::GeoPoint& around, double radius_m) = 0;
  virtual std::vector<std::uint8_t> fetch_tile(const PanoMetadata& meta, int row, int col) = 0;
};

/// Directory provider: manifest.json plus tiles/<pano_id>/<row>_<col>.png.
/// `root` may also name the manifest file itself; tiles sit beside it.
class FixtureProvider : public Provider {
 public:
  explicit FixtureProvider(std::filesystem::path root);

  std::vector<PanoMetadata> list_near(const geo::GeoPoint& around, double radius_m) override;
  std::vector<std::uint8_t> fetch_tile(const PanoMetadata& meta, int row, int col) override;

  const std::vector<PanoMetadata>& all() const noexcept { return panos_; }
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<PanoMetadata> panos_;
};

/// Generic HTTP tile provider driven by URL templates.
///   metadata_url: {lat} {lon} {radius}; must answer with a manifest document.
///   tile_url:     {pano_id} {zoom} {x} {y}; x is the column, y the row.
/// Only plain http:// URLs are supported.
class HttpProvider : public Provider {
 public:
  struct Options {
    std::string metadata_url;
    std::string tile_url;
    int zoom = 5;
    std::chrono::milliseconds timeout{10000};
    double max_requests_per_second = 0.0;  ///< 0 disables throttling
  };

  explicit HttpProvider(Options opts);
  ~HttpProvider() override;

  std::vector<PanoMetadata> list_near(const geo::GeoPoint& around, double radius_m) override;
  std::vector<std::uint8_t> fetch_tile(const PanoMetadata& meta, int row, int col) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parses a manifest document: {"panos": [{pano_id, lat, lon, heading_deg,
/// cols, rows, tile_px, heading_convention, capture_date?, alt?}, ...]}.
std::vector<PanoMetadata> parse_manifest(const std::string& json_text);
std::string to_manifest_json(const std::vector<PanoMetadata>& panos);

/// Metadata within radius_m of `around`, deduplicated by pano_id and sorted
/// by distance then pano_id. Throws Errc::kNoCoverage when nothing is in range.
std::vector<PanoMetadata> fetch_nearby(Provider& provider, const geo::GeoPoint& around,
                                       double radius_m);

struct SequenceOptions {
  int n = 5;
  double spacing_warn_m = 15.0;
};

/// PN_0 is the pano nearest `input`; the rest are ordered by their projection
/// on the principal axis of the pano positions through PN_0, oriented along
/// PN_0's heading, with up to n on each side.
PanoSequence select_sequence(const std::vector<PanoMetadata>& metas, const geo::GeoPoint& input,
                             const SequenceOptions& opts = {});

/// Row-major tiles (index r * cols + c). Throws Errc::kIncompleteGrid naming
/// the first missing cell and Errc::kTileSizeMismatch for a wrongly sized tile.
Image stitch_tiles(const std::vector<std::optional<Image>>& tiles, const TileGrid& grid);
std::vector<Image> slice_tiles(const Image& pano, const TileGrid& grid);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep;  ///< defaults to sleep_for
};

struct DownloadOptions {
  RetryPolicy retry;
  unsigned max_concurrency = 8;
};

/// Fetches all tiles (concurrently, up to the cap), retries transient
/// failures, stitches, and normalizes the heading to the center column.
Panorama download_panorama(Provider& provider, const PanoMetadata& meta,
                           const DownloadOptions& opts = {});

/// Horizontal circular shift by `dx` columns (positive moves content right).
Image roll_columns(const Image& img, int dx);

}  // namespace streetside::acquisition
