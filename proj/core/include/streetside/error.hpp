#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace streetside {

enum class Errc {
  // geo
  kOutOfRange,
  kDegenerateLongitude,
  kUndefinedBearing,
  kDegenerateConfiguration,
  // projection / imaging
  kInvalidFov,
  kPixelOutOfBounds,
  kInvalidImage,
  kImageCodec,
  // acquisition
  kProviderUnreachable,
  kTransientFetch,
  kFetchFailed,
  kNotFound,
  kParse,
  kIncompleteGrid,
  kTileSizeMismatch,
  kEmptyInput,
  kNoCoverage,
  // exif
  kNotJpeg,
  kNoExif,
  kNoGps,
  kTruncated,
  kZeroDenominator,
  kMalformedExif,
  // detection
  kNoBuildingFound,
  kUnknownImage,
  kDetectorUnavailable,
  kDetectorProtocol,
  // two-view geometry
  kInsufficientFeatures,
  kSingularMatrix,
  kInsufficientMatches,
  kEstimationFailure,
  kCheiralityFailure,
  kTriangulationDegenerate,
  kEmptyInliers,
  // pipeline
  kNeighborRequired,
  kUndefinedSide,
  // evaluation
  kInvalidArgument,
  kUndefinedDenominator,
  kCountOutOfRange,
  // misc
  kIo,
  kConfig,
  kInvalidScene,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `code()` is stable and machine-readable; `step()`
/// names the pipeline stage when the error surfaced during a run.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Error(Errc code, const std::string& message, std::string step)
      : std::runtime_error(message), code_(code), step_(std::move(step)) {}

  Errc code() const noexcept { return code_; }
  const std::string& step() const noexcept { return step_; }

 private:
  Errc code_;
  std::string step_;
};

}  // namespace streetside
