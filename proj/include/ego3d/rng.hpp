#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ego3d {

/// Seeded generator with fully specified derived draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The std distributions are not, so every derived quantity is
/// computed here:
///   uniform_index(n): draw r until r >= (2^64 mod n), return r mod n
///   uniform01():      (r >> 11) * 2^-53
///   shuffle:          Fisher-Yates from the last element down,
///                     j = uniform_index(i + 1)
/// Any implementation following these rules reproduces the same QA files.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  std::uint64_t uniform_index(std::uint64_t n);

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for an independent substream named by `tag`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept {
  return splitmix64(seed ^ fnv1a64(tag));
}

}  // namespace ego3d
