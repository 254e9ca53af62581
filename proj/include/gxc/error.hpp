#pragma once

#include <stdexcept>
#include <string>

namespace gxc {

enum class Errc {
  InvalidArgument,
  ShapeMismatch,
  NonSquareGrid,
  MaskTooSmall,
  AllZero,
  CoordOutOfBounds,
  InvalidSpec,
  IoError,
  FormatError,
  EmptyBatch,
  NonFiniteLoss,
  ZeroVector,
  MissingEntry,
};

const char* errc_name(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gxc
