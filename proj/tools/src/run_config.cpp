#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "streetside/error.hpp"
#include "streetside/synthetic.hpp"

namespace streetside::cli {
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(Errc::kConfig, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Reduces the TOML-style text to what the INI reader accepts: '#' comments
// dropped (outside quotes), quoted values unwrapped.
std::string to_ini(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    if (quoted) fail(fmt::format("line {}: unterminated string", lineno));
    line = trim(line);
    if (const auto eq = line.find('='); eq != std::string::npos && line.front() != '[') {
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      line = trim(line.substr(0, eq)) + " = " + value;
    }
    out << line << '\n';
  }
  return out.str();
}

class Reader {
 public:
  Reader(const pt::ptree& tree, const fs::path& base, const std::vector<std::string>& overrides) {
    for (const auto& [section, body] : tree) {
      if (body.empty()) fail(fmt::format("key '{}' must sit inside a [section]", section));
      for (const auto& [key, value] : body) values_[section + "." + key] = {value.data(), base};
    }
    // Command-line overrides win; their relative paths are relative to the cwd.
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || o.find('.') > eq) fail("override '" + o + "' is not section.key=value");
      values_[trim(o.substr(0, eq))] = {trim(o.substr(eq + 1)), fs::current_path()};
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    const std::string& s = it->second.first;
    if constexpr (std::is_same_v<T, std::string>) {
      out = s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true") {
        out = true;
      } else if (s == "false") {
        out = false;
      } else {
        fail(fmt::format("{}: expected true or false, got '{}'", key, s));
      }
    } else {
      T v{};
      const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || end != s.data() + s.size()) {
        fail(fmt::format("{}: expected a number, got '{}'", key, s));
      }
      out = v;
    }
  }

  void path(const std::string& key, fs::path& out) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    const fs::path p(s);
    out = p.is_absolute() ? p : values_.at(key).second / p;
  }

  void millis(const std::string& key, std::chrono::milliseconds& out) {
    double seconds = -1.0;
    get(key, seconds);
    if (!values_.count(key)) return;
    if (!(seconds > 0.0)) fail(key + ": must be positive");
    out = std::chrono::milliseconds(static_cast<long>(seconds * 1000.0 + 0.5));
  }

  void finish() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) fail("unknown setting " + key);
    }
  }

 private:
  std::map<std::string, std::pair<std::string, fs::path>> values_;
  std::set<std::string> used_;
};

void validate(const RunConfig& c) {
  c.extraction.validate();
  if (c.provider.kind == "fixture") {
    if (c.provider.root.empty()) fail("provider.root is required for the fixture provider");
  } else if (c.provider.kind == "http") {
    if (c.provider.http.metadata_url.empty() || c.provider.http.tile_url.empty()) {
      fail("provider.metadata_url and provider.tile_url are required for the http provider");
    }
    if (c.provider.http.zoom < 0) fail("provider.zoom must be non-negative");
    if (c.provider.http.max_requests_per_second < 0) fail("provider.max_requests_per_second must be >= 0");
  } else {
    fail("provider.kind must be fixture or http, got '" + c.provider.kind + "'");
  }
  if (c.extraction.download.max_concurrency == 0) fail("provider.max_concurrency must be positive");
  if (c.extraction.download.retry.attempts < 1) fail("provider.retry_attempts must be at least 1");
  if (!(c.extraction.download.retry.multiplier >= 1.0)) fail("provider.retry_multiplier must be >= 1");

  if (c.detector.kind == "remote") {
    if (c.detector.remote.base_url.empty()) fail("detector.endpoint is required");
    if (c.detector.remote.max_in_flight == 0) fail("detector.max_in_flight must be positive");
  } else if (c.detector.kind == "oracle") {
    if (c.detector.annotations.empty()) fail("detector.annotations is required for the oracle detector");
    if (!(c.detector.oracle.jitter_sigma_px >= 0.0)) fail("detector.jitter_sigma_px must be >= 0");
  } else {
    fail("detector.kind must be remote or oracle, got '" + c.detector.kind + "'");
  }

  if (c.matcher.kind == "oracle") {
    if (c.matcher.scene.empty()) fail("matcher.scene is required for the oracle matcher");
  } else if (c.matcher.kind == "orb") {
    if (c.matcher.orb.max_features <= 0) fail("matcher.max_features must be positive");
    if (!(c.matcher.orb.ratio > 0.0 && c.matcher.orb.ratio <= 1.0)) fail("matcher.ratio must lie in (0, 1]");
  } else {
    fail("matcher.kind must be orb or oracle, got '" + c.matcher.kind + "'");
  }

  static const std::set<std::string> levels = {"trace", "debug", "info", "warn", "error", "off"};
  if (!levels.count(c.log_level)) fail("log.level must be one of trace, debug, info, warn, error, off");
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, const EnvLookup& env,
                           const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(to_ini(text));
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(fmt::format("line {}: {}", e.line(), e.message()));
  }
  Reader r(tree, base_dir, overrides);
  RunConfig c;
  auto& x = c.extraction;
  r.get("extraction.n", x.n);
  r.get("extraction.theta_deg", x.theta_deg);
  r.get("extraction.out_side", x.out_side);
  r.get("extraction.detect_threshold", x.detect_threshold);
  r.get("extraction.detect_retry_threshold", x.detect_retry_threshold);
  r.get("extraction.crop_threshold", x.crop_threshold);
  r.get("extraction.nms_iou", x.nms_iou);
  r.get("extraction.min_bbox_side", x.min_bbox_side);
  r.get("extraction.search_radius_m", x.search_radius_m);
  r.get("extraction.spacing_warn_m", x.spacing_warn_m);
  r.get("extraction.side_consistency_deg", x.side_consistency_deg);
  r.get("extraction.threads", x.threads);

  r.get("ransac.pixel_threshold", x.ransac.pixel_threshold);
  r.get("ransac.confidence", x.ransac.confidence);
  r.get("ransac.max_iterations", x.ransac.max_iterations);
  r.get("ransac.seed", x.ransac.seed);

  r.get("provider.kind", c.provider.kind);
  r.path("provider.root", c.provider.root);
  r.get("provider.metadata_url", c.provider.http.metadata_url);
  r.get("provider.tile_url", c.provider.http.tile_url);
  r.get("provider.zoom", c.provider.http.zoom);
  r.millis("provider.timeout_s", c.provider.http.timeout);
  r.get("provider.max_requests_per_second", c.provider.http.max_requests_per_second);
  r.get("provider.max_concurrency", x.download.max_concurrency);
  r.get("provider.retry_attempts", x.download.retry.attempts);
  int backoff_ms = -1;
  r.get("provider.retry_backoff_ms", backoff_ms);
  if (backoff_ms >= 0) x.download.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
  r.get("provider.retry_multiplier", x.download.retry.multiplier);

  r.get("detector.kind", c.detector.kind);
  r.get("detector.endpoint", c.detector.remote.base_url);
  r.millis("detector.timeout_s", c.detector.remote.timeout);
  r.get("detector.max_in_flight", c.detector.remote.max_in_flight);
  r.path("detector.annotations", c.detector.annotations);
  r.get("detector.jitter_sigma_px", c.detector.oracle.jitter_sigma_px);
  r.get("detector.seed", c.detector.oracle.seed);

  r.get("matcher.kind", c.matcher.kind);
  r.get("matcher.max_features", c.matcher.orb.max_features);
  r.get("matcher.ratio", c.matcher.orb.ratio);
  r.get("matcher.cross_check", c.matcher.orb.cross_check);
  r.path("matcher.scene", c.matcher.scene);

  r.get("log.level", c.log_level);
  r.finish();

  if (const auto url = env(kDetectorEndpointEnv); url && !url->empty()) {
    c.detector.remote.base_url = *url;
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& path, const EnvLookup& env,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), path.parent_path(), env, overrides);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::unique_ptr<acquisition::Provider> make_provider(const RunConfig& cfg) {
  if (cfg.provider.kind == "http") return std::make_unique<acquisition::HttpProvider>(cfg.provider.http);
  return std::make_unique<acquisition::FixtureProvider>(cfg.provider.root);
}

std::unique_ptr<detection::Detector> make_detector(const RunConfig& cfg) {
  if (cfg.detector.kind == "oracle") {
    return std::make_unique<detection::OracleDetector>(
        detection::OracleDetector::from_file(cfg.detector.annotations, cfg.detector.oracle));
  }
  return std::make_unique<detection::RemoteDetector>(cfg.detector.remote);
}

std::unique_ptr<mvg::FeatureMatcher> make_matcher(const RunConfig& cfg) {
  if (cfg.matcher.kind == "oracle") {
    const auto spec = synthetic::load_fixture_spec(cfg.matcher.scene);
    std::map<std::string, synthetic::CameraPose> poses;
    for (const auto& p : spec.panos) poses[p.pano_id] = p.pose;
    return std::make_unique<synthetic::SceneOracleMatcher>(spec.scene, poses, spec.target);
  }
  return std::make_unique<mvg::OrbMatcher>(cfg.matcher.orb);
}

}  // namespace streetside::cli
