#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "streetside/acquisition.hpp"
#include "streetside/error.hpp"

// Last: <resolv.h> defines _res as a macro.
#include <httplib.h>

namespace streetside::acquisition {
namespace {

struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) {
    throw Error(Errc::kConfig, "only http:// URLs are supported: " + url);
  }
  const auto slash = url.find('/', scheme.size());
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string substitute(std::string tpl, const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{" + key + "}";
    for (auto pos = tpl.find(token); pos != std::string::npos; pos = tpl.find(token, pos + value.size())) {
      tpl.replace(pos, token.size(), value);
    }
  }
  return tpl;
}

}  // namespace

struct HttpProvider::Impl {
  Options opts;
  std::mutex mu;
  std::chrono::steady_clock::time_point next_slot{};

  void throttle() {
    if (opts.max_requests_per_second <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / opts.max_requests_per_second));
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu);
      slot = std::max(next_slot, std::chrono::steady_clock::now());
      next_slot = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

  httplib::Result get(const std::string& url) {
    throttle();
    const SplitUrl u = split_url(url);
    httplib::Client cli(u.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    return cli.Get(u.path);
  }
};

HttpProvider::HttpProvider(Options opts) : impl_(std::make_unique<Impl>()) {
  split_url(opts.metadata_url);
  split_url(opts.tile_url);
  impl_->opts = std::move(opts);
}

HttpProvider::~HttpProvider() = default;

std::vector<PanoMetadata> HttpProvider::list_near(const geo::GeoPoint& around, double radius_m) {
  const std::string url =
      substitute(impl_->opts.metadata_url, {{"lat", fmt::format("{:.9f}", around.lat)},
                                            {"lon", fmt::format("{:.9f}", around.lon)},
                                            {"radius", fmt::format("{}", radius_m)}});
  const auto res = impl_->get(url);
  if (!res) {
    throw Error(Errc::kProviderUnreachable,
                "metadata request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kProviderUnreachable,
                fmt::format("metadata request returned HTTP {}", res->status));
  }
  return parse_manifest(res->body);
}

std::vector<std::uint8_t> HttpProvider::fetch_tile(const PanoMetadata& meta, int row, int col) {
  const std::string url = substitute(impl_->opts.tile_url, {{"pano_id", meta.pano_id},
                                                             {"zoom", std::to_string(impl_->opts.zoom)},
                                                             {"x", std::to_string(col)},
                                                             {"y", std::to_string(row)}});
  const auto res = impl_->get(url);
  if (!res) {
    throw Error(Errc::kTransientFetch, "tile request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 200) return {res->body.begin(), res->body.end()};
  if (res->status == 404) {
    throw Error(Errc::kNotFound, fmt::format("tile ({},{}) of {} not found", row, col, meta.pano_id));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(Errc::kTransientFetch, fmt::format("tile request returned HTTP {}", res->status));
  }
  throw Error(Errc::kFetchFailed, fmt::format("tile request returned HTTP {}", res->status));
}

}  // namespace streetside::acquisition
