#pragma once

#include <ostream>
#include <string>

#include "streetside/error.hpp"
#include "streetside/pipeline.hpp"

namespace streetside::cli {

/// "lat,lon" becomes a GeoPoint; anything else is read as a JPEG file.
pipeline::RunInput parse_input(const std::string& arg);

/// One-line JSON error record: {"error":{"code":..,"step":..,"message":..}}
std::string error_line(const Error& e);

/// Entry point behind the `streetside` binary. Returns the exit code;
/// results go to `out`, the error line to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace streetside::cli
