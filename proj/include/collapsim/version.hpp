#pragma once

namespace collapsim {

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace collapsim
