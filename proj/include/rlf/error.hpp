#pragma once

#include <stdexcept>
#include <string>

namespace rlf {

enum class ErrorKind {
  config,              // invalid dims, spacing, windows, reference IR ordering
  input,               // query point or source outside the allowed region
  no_arrival,          // all-zero impulse response
  zero_energy,         // Schroeder curve or level window with no energy
  undefined_decay,     // non-negative decay slope
  degenerate_gradient, // DOA gradient norm below threshold
  isolation,           // no visible interpolation vertex
  divergence,          // non-finite training loss
  io,                  // file format or filesystem failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rlf
