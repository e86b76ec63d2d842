#pragma once

namespace hk {
inline constexpr const char* kVersion = "0.1.0";
}
