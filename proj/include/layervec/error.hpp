#pragma once

#include <stdexcept>
#include <string>

namespace layervec {

enum class ErrorKind {
  invalid_input,
  decode,
  io,
  shape,
  empty_mask,
  degenerate_shape,
  invalid_scene,
  unsupported,
  divergence,
};

const char* to_string(ErrorKind kind);

/// Base exception for every recoverable failure in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::decode: return "decode error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::empty_mask: return "empty mask";
    case ErrorKind::degenerate_shape: return "degenerate shape";
    case ErrorKind::invalid_scene: return "invalid scene";
    case ErrorKind::unsupported: return "unsupported feature";
    case ErrorKind::divergence: return "divergence";
  }
  return "error";
}

}  // namespace layervec
