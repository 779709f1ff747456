#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streetside/acquisition.hpp"
#include "streetside/detection.hpp"
#include "streetside/mvg.hpp"
#include "streetside/pipeline.hpp"

namespace streetside::cli {

struct ProviderConfig {
  std::string kind = "fixture";  ///< fixture | http
  std::filesystem::path root;    ///< fixture directory holding manifest.json
  acquisition::HttpProvider::Options http;
};

struct DetectorConfig {
  std::string kind = "remote";  ///< remote | oracle
  detection::RemoteDetector::Options remote;
  std::filesystem::path annotations;  ///< oracle table
  detection::OracleDetector::Options oracle;
};

struct MatcherConfig {
  std::string kind = "orb";  ///< orb | oracle
  mvg::OrbMatcher::Options orb;
  std::filesystem::path scene;  ///< scene.json for the oracle matcher
};

struct RunConfig {
  pipeline::ExtractionConfig extraction;
  ProviderConfig provider;
  DetectorConfig detector;
  MatcherConfig matcher;
  std::string log_level = "info";
};

/// Looks up environment variables; std::getenv by default.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Environment variable that overrides [detector] endpoint.
inline constexpr const char* kDetectorEndpointEnv = "STREETSIDE_DETECTOR_URL";

/// Parses TOML-style text: [section] headers, key = value lines, '#'
/// comments, optionally quoted strings. Relative paths resolve against
/// base_dir. Unknown sections or keys, malformed values and out-of-domain
/// settings throw Errc::kConfig naming the key. `overrides` are
/// "section.key=value" strings applied on top of the text.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const EnvLookup& env = process_env(),
                           const std::vector<std::string>& overrides = {});

RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env = process_env(),
                          const std::vector<std::string>& overrides = {});

std::unique_ptr<acquisition::Provider> make_provider(const RunConfig& cfg);
std::unique_ptr<detection::Detector> make_detector(const RunConfig& cfg);
std::unique_ptr<mvg::FeatureMatcher> make_matcher(const RunConfig& cfg);

}  // namespace streetside::cli
