#pragma once

#include <stdexcept>
#include <string>

namespace relucert {

// Error taxonomy. Exit-code mapping lives in the CLI: usage/parameter -> 1,
// file/schema/shape -> 2, numeric -> 3.

struct invalid_parameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed document text (not valid JSON at all).
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Valid document, wrong structure. layer is -1 when not layer-specific.
struct schema_error : std::runtime_error {
  int layer;
  explicit schema_error(const std::string& msg, int layer_index = -1)
      : std::runtime_error(msg), layer(layer_index) {}
};

struct dimension_mismatch : std::runtime_error {
  int layer;
  explicit dimension_mismatch(const std::string& msg, int layer_index = -1)
      : std::runtime_error(msg), layer(layer_index) {}
};

struct invariant_violation : std::logic_error {
  using std::logic_error::logic_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace relucert
