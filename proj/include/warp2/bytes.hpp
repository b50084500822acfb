#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace warp2 {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) {
    auto v = as_bytes(s);
    return {v.begin(), v.end()};
}

inline std::string to_string(ByteView b) {
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

/// Lowercase hex, no prefix.
std::string to_hex(ByteView data);

/// Accepts lowercase hex only; throws Error(invalid_argument) otherwise.
Bytes from_hex(std::string_view hex);

/// Standard base64 with padding.
std::string to_base64(ByteView data);

/// Throws Error(invalid_argument) on malformed input.
Bytes from_base64(std::string_view text);

}  // namespace warp2
