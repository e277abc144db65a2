#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace hfz {

// 64-bit FNV-1a. Used wherever a value must be stable across runs and
// platforms: block hashes, frame hashes, seed file names, report ids.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 14695981039346656037ULL;
  static constexpr std::uint64_t kPrime = 1099511628211ULL;

  constexpr Fnv1a& byte(std::uint8_t b) {
    state_ ^= b;
    state_ *= kPrime;
    return *this;
  }
  constexpr Fnv1a& u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }
  Fnv1a& bytes(std::span<const std::uint8_t> data) {
    for (auto b : data) byte(b);
    return *this;
  }
  Fnv1a& str(std::string_view s) {
    for (char c : s) byte(static_cast<std::uint8_t>(c));
    // length terminator keeps ("ab","c") and ("a","bc") apart
    return u64(s.size());
  }
  constexpr std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> data) {
  return Fnv1a{}.bytes(data).value();
}

std::string to_hex(std::uint64_t v);

}  // namespace hfz
