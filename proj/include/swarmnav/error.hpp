#pragma once

#include <stdexcept>
#include <string>

namespace swarmnav {

// Root of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GeometryError : Error { using Error::Error; };
struct MeshBuildError : Error { using Error::Error; };
struct LocationError : Error { using Error::Error; };
struct UnreachableError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct IncompatibleError : Error { using Error::Error; };
struct UndefinedBaselineError : Error { using Error::Error; };

}  // namespace swarmnav
