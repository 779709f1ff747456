#include "streetside/error.hpp"

namespace streetside {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::kOutOfRange: return "out_of_range";
    case Errc::kDegenerateLongitude: return "degenerate_longitude";
    case Errc::kUndefinedBearing: return "undefined_bearing";
    case Errc::kDegenerateConfiguration: return "degenerate_configuration";
    case Errc::kInvalidFov: return "invalid_fov";
    case Errc::kPixelOutOfBounds: return "pixel_out_of_bounds";
    case Errc::kInvalidImage: return "invalid_image";
    case Errc::kImageCodec: return "image_codec";
    case Errc::kProviderUnreachable: return "provider_unreachable";
    case Errc::kTransientFetch: return "transient_fetch";
    case Errc::kFetchFailed: return "fetch_failed";
    case Errc::kNotFound: return "not_found";
    case Errc::kParse: return "parse_error";
    case Errc::kIncompleteGrid: return "incomplete_grid";
    case Errc::kTileSizeMismatch: return "tile_size_mismatch";
    case Errc::kEmptyInput: return "empty_input";
    case Errc::kNoCoverage: return "no_coverage";
    case Errc::kNotJpeg: return "not_jpeg";
    case Errc::kNoExif: return "no_exif";
    case Errc::kNoGps: return "no_gps";
    case Errc::kTruncated: return "truncated";
    case Errc::kZeroDenominator: return "zero_denominator";
    case Errc::kMalformedExif: return "malformed_exif";
    case Errc::kNoBuildingFound: return "no_building_found";
    case Errc::kUnknownImage: return "unknown_image";
    case Errc::kDetectorUnavailable: return "detector_unavailable";
    case Errc::kDetectorProtocol: return "detector_protocol";
    case Errc::kInsufficientFeatures: return "insufficient_features";
    case Errc::kSingularMatrix: return "singular_matrix";
    case Errc::kInsufficientMatches: return "insufficient_matches";
    case Errc::kEstimationFailure: return "estimation_failure";
    case Errc::kCheiralityFailure: return "cheirality_failure";
    case Errc::kTriangulationDegenerate: return "triangulation_degenerate";
    case Errc::kEmptyInliers: return "empty_inliers";
    case Errc::kNeighborRequired: return "neighbor_required";
    case Errc::kUndefinedSide: return "undefined_side";
    case Errc::kInvalidArgument: return "invalid_argument";
    case Errc::kUndefinedDenominator: return "undefined_denominator";
    case Errc::kCountOutOfRange: return "count_out_of_range";
    case Errc::kIo: return "io_error";
    case Errc::kConfig: return "config_error";
    case Errc::kInvalidScene: return "invalid_scene";
  }
  return "unknown";
}

}  // namespace streetside
