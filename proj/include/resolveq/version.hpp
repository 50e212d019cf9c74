#pragma once

namespace resolveq
{

inline constexpr const char *kVersion = "0.1.0";

} // namespace resolveq
