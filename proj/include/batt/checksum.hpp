#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace batt {

// 64-bit FNV-1a. Used for file checksums and config/model digests.
class Fnv1a64 {
 public:
  static constexpr uint64_t kOffsetBasis = 14695981039346656037ull;
  static constexpr uint64_t kPrime = 1099511628211ull;

  void update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= kPrime;
    }
  }

  void update(std::string_view s) { update(s.data(), s.size()); }

  uint64_t value() const { return state_; }

 private:
  uint64_t state_ = kOffsetBasis;
};

inline uint64_t fnv1a64(const void* data, size_t n) {
  Fnv1a64 h;
  h.update(data, n);
  return h.value();
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(uint64_t v);

}  // namespace batt
