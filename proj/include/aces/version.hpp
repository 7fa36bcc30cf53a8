#pragma once

namespace aces {

inline constexpr const char* kToolName = "aces";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace aces
