#pragma once

#include <stdexcept>
#include <string>

namespace psan {

// Error taxonomy shared by the whole library. The command-line tool maps
// these onto exit codes: ConfigError -> 1, data errors -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes or axes that do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// Arguments that are well-shaped but out of domain (labels, empty input).
struct ValueError : Error {
  using Error::Error;
};

// A file that cannot be parsed; messages carry the offending line.
struct FormatError : Error {
  using Error::Error;
};

// Parsed input whose structure is inconsistent (bad roots, dangling edges,
// token counts that disagree between views of the same discourse).
struct StructuralError : Error {
  using Error::Error;
};

// Bad configuration values or invalid knob combinations.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values or failed numeric checks.
struct NumericError : Error {
  using Error::Error;
};

// Misuse of the gradient tape (backward on a value from another tape, ...).
struct TapeError : Error {
  using Error::Error;
};

}  // namespace psan
