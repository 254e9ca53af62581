#include "gxc/error.hpp"

namespace gxc {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonSquareGrid: return "NonSquareGrid";
    case Errc::MaskTooSmall: return "MaskTooSmall";
    case Errc::AllZero: return "AllZero";
    case Errc::CoordOutOfBounds: return "CoordOutOfBounds";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::MissingEntry: return "MissingEntry";
  }
  return "Unknown";
}

}  // namespace gxc
