#pragma once

namespace fingerdiff {

inline constexpr const char* kToolVersion = "fingerdiff 0.1.0";
inline constexpr int kCheckpointSchemaVersion = 1;

}  // namespace fingerdiff
