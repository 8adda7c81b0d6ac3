#pragma once

namespace mlsq {

inline constexpr const char* version_string = "0.1.0";

} // namespace mlsq
