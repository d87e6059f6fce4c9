#pragma once

#include <stdexcept>
#include <string>

namespace drivesense {

enum class Errc {
  invalid_argument,
  empty_dataset,
  insufficient_class,
  degenerate_labels,
  degenerate_column,
  unknown_effect,
  io,
  format,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::empty_dataset: return "empty-dataset";
    case Errc::insufficient_class: return "insufficient-class";
    case Errc::degenerate_labels: return "degenerate-labels";
    case Errc::degenerate_column: return "degenerate-column";
    case Errc::unknown_effect: return "unknown-effect";
    case Errc::io: return "io";
    case Errc::format: return "format";
  }
  return "unknown";
}

// Pipeline-level failure. Parsers do not throw; they return ParseError.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace drivesense
