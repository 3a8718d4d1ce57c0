#pragma once

namespace rvp {

inline constexpr const char* kEngineVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

}  // namespace rvp
