#pragma once

namespace dronenet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dronenet
