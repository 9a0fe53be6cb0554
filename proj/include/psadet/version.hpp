#pragma once

namespace psadet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace psadet
