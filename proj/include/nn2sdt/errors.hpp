#pragma once

#include <stdexcept>
#include <string>

namespace nn2sdt {

/// Shape or index violation in a caller-supplied value.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. The message names the offending field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configured node, pattern or time budget was exhausted.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An invariant that construction guarantees was observed broken.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace nn2sdt
