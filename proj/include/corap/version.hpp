#pragma once

namespace corap {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace corap
