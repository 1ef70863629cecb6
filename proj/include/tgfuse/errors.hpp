#pragma once

#include <stdexcept>
#include <string>

namespace tgfuse {

/// Operand shapes are incompatible for the requested operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A model or run configuration is invalid (bad dims, unknown keys, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Caller supplied malformed data (token sequences, non-binary masks, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// API misuse: backward on a non-scalar, reuse of a consumed tape, ...
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file contents; carries the byte offset where parsing failed.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::size_t offset;
};

}  // namespace tgfuse
