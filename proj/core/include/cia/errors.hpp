#pragma once

#include <stdexcept>
#include <string>

namespace cia {

/// Raised when a file (model, dataset, image) is malformed or unreadable.
/// `kind` lets callers distinguish bad magic from truncation etc. without
/// string matching.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, ShapeMismatch, Io, BadValue };

  FormatError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace cia
