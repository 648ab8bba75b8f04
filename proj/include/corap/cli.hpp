#pragma once

namespace corap::cli {

// Exit codes: 0 success, 1 error, 2 calibration abstained, 3 base model
// already covers the attribution target.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitAbstained = 2;
inline constexpr int kExitTargetCovered = 3;

int run(int argc, const char* const* argv);

}  // namespace corap::cli
