#pragma once

namespace dirsurf::app {

inline constexpr const char* kVersion = DIRSURF_VERSION;

}  // namespace dirsurf::app
