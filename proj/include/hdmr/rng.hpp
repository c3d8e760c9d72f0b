#pragma once

#include <cstdint>
#include <random>

namespace hdmr {

/// Independent random stream keyed by (seed, stream), so draws never depend
/// on iteration or thread order.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream) : eng_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return std::normal_distribution<double>()(eng_); }

  static std::uint64_t stream_id(std::uint64_t a, std::uint64_t b) { return mix(a * 0x100000001b3ULL ^ mix(b)); }

 private:
  // splitmix64 finalizer, used to spread (seed, stream) keys
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace hdmr
