#pragma once

#include <stdexcept>
#include <string>

namespace meshtrace {

// Input bytes that do not parse (OBJ records, manifests). Carries a line
// number when one is known.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, long line = -1)
      : std::runtime_error(line >= 0 ? "parse error at line " +
                                           std::to_string(line) + ": " + msg
                                     : "parse error: " + msg),
        line_number(line) {}
  long line_number;
};

// Structurally invalid data (face index out of range, schema violations).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad call arguments (empty point set, dimension mismatch).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Geometry too degenerate to operate on (zero-area mesh, empty component).
struct DegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or inconsistent configuration (no mean shape for a class).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace meshtrace
