#pragma once

namespace featforge {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace featforge
