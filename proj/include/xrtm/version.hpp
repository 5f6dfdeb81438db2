#pragma once

namespace xrtm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace xrtm
