#pragma once

namespace fvmps {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the snapshot container layout changes.
inline constexpr int kSnapshotFormatVersion = 1;

}  // namespace fvmps
