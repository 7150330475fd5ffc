#pragma once

namespace lahr {

// Recorded in run manifests so every artifact names the code that made it.
inline constexpr const char* kVersion = "1.0.0";

}  // namespace lahr
