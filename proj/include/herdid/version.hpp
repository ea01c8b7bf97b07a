#pragma once

namespace herdid {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace herdid
