#pragma once

namespace qsd {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kResultSchema = "qsdlab-result-v1";

}  // namespace qsd
