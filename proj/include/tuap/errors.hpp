#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tuap {

/// Precondition on a value was violated (empty input, bad class id, non-positive budget, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two tensors (or a tensor and a model) disagree on shape.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed binary file. `offset()` is the byte position where parsing failed.
class format_error : public std::runtime_error {
 public:
  format_error(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class unsupported_version_error : public format_error {
 public:
  unsupported_version_error(const std::string& kind, unsigned found, unsigned expected, std::size_t offset)
      : format_error(kind + " format version " + std::to_string(found) + " is not supported (expected " +
                         std::to_string(expected) + ")",
                     offset) {}
};

/// Loss gradient has zero L1/L2 norm, so no normalized step direction exists.
class degenerate_gradient_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tuap
