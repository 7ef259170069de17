#pragma once

namespace sphemu {
inline constexpr const char* kVersion = "0.1.0";
}
