#pragma once

namespace gsatk {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kProvenanceSchemaVersion = 1;

}  // namespace gsatk
