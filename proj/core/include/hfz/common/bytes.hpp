#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace hfz {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace hfz
