#pragma once

namespace ctsim {

inline constexpr const char* kVersion = "ctsim-0.1.0";

// Version tag embedded in every on-disk container header.
inline constexpr const char* kFormatVersion = "1";

}  // namespace ctsim
