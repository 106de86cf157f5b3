#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dystop {

using Rng = std::mt19937_64;

/// Independent substreams. Each component of the simulation draws from its own
/// tagged stream so that changing one knob (say phi) leaves the other draws alone.
enum class StreamTag : std::uint64_t {
  positions = 1,
  tx_power,
  compute,
  partition,
  objectives,
  dataset,
  test_set,
  gains,
  budget,
  gradient,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
} // namespace detail

/// Mix a base seed, a stream tag and any number of indices (round, worker ids)
/// into one 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                                 std::initializer_list<std::uint64_t> indices = {}) noexcept {
  std::uint64_t h = detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(tag)));
  for (auto v : indices) h = detail::splitmix64(h ^ detail::splitmix64(v + 0x632be59bd9b4e019ULL));
  return h;
}

/// Small counter-style engine, cheap to construct; used for the per-link,
/// per-round fading draws where a fresh stream is needed for every pair.
class SplitMix64 {
public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

inline Rng make_stream(std::uint64_t seed, StreamTag tag,
                       std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(seed, tag, indices));
}

} // namespace dystop
