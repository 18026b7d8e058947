#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

namespace ruleprompt {

// FNV-1a, 64-bit. Identity hashing only; not collision resistant against adversaries.
class Fnv1a {
 public:
  void update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001B3ULL;
    }
  }

  void update(double value) noexcept {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
      state_ ^= (bits >> (8 * i)) & 0xFFU;
      state_ *= 0x100000001B3ULL;
    }
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

/// 16 lowercase hex digits.
std::string hex_digest(std::uint64_t value);

}  // namespace ruleprompt
