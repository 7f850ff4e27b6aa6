#pragma once

#include <string_view>

namespace adarank {

inline constexpr std::string_view kToolName = "adarank";
inline constexpr std::string_view kToolVersion = "1.0.0";

}  // namespace adarank
