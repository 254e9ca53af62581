#pragma once

namespace gxc {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace gxc
