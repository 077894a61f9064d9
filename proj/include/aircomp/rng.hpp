#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace aircomp {

/// SplitMix64 finalizer. Used both as the stream-key mixer and as the
/// output function of CounterRng.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds an ordered list of identifiers into a single stream key.
constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t key = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) key = mix64(key ^ mix64(p));
  return key;
}

/// Domain tags keep streams for different purposes apart even when their
/// numeric identifiers coincide.
enum class StreamTag : std::uint64_t {
  init = 1,
  quantize = 2,
  fading = 3,
  noise = 4,
  messages = 5,
  batches = 6,
  partition = 7,
  data = 8,
  participation = 9,
  eval = 10,
};

/// Counter-based generator: output i of the stream with key K is
/// mix64(K + i * golden). Any (key, counter) pair can be reproduced without
/// replaying earlier draws, so per-element streams do not depend on the
/// order in which elements are processed. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() noexcept = default;
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  constexpr CounterRng(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0) noexcept
      : key_(stream_key({seed, static_cast<std::uint64_t>(tag), a, b, c})) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace aircomp
