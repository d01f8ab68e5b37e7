#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

// Counter-based random streams. A stream is fully determined by its key
// (seed, tag, a, b), so draws do not depend on evaluation order or on how
// work is split across threads.

namespace dyadic {

namespace detail {

constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Stream tags. Values are part of the on-disk reproducibility contract.
enum class StreamTag : std::uint64_t {
  regressor = 0x58,  // X_i
  unit = 0x55,       // U_i
  pair = 0x56,       // (V_ij, V_ji)
  replication = 0x52,
  auxiliary = 0x41,
};

constexpr std::uint64_t stream_key(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                                   std::uint64_t b = 0) noexcept {
  std::uint64_t k = detail::splitmix_finalize(seed + 0x9e3779b97f4a7c15ULL);
  k = detail::splitmix_finalize(k ^ static_cast<std::uint64_t>(tag));
  k = detail::splitmix_finalize(k ^ (a + 0x632be59bd9b4e019ULL));
  k = detail::splitmix_finalize(k ^ (b + 0x85157af5c3f5a3bdULL));
  return k;
}

/// Seed for replication `rep` at sample size `n` under a master seed.
constexpr std::uint64_t replication_seed(std::uint64_t master, std::uint64_t n,
                                         std::uint64_t rep) noexcept {
  return stream_key(master, StreamTag::replication, n, rep);
}

class RandomStream {
 public:
  explicit constexpr RandomStream(std::uint64_t key) noexcept : state_(key) {}
  RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0) noexcept
      : state_(stream_key(seed, tag, a, b)) {}

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::splitmix_finalize(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Two independent standard normals (Box-Muller).
  std::pair<double, double> normal_pair() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(t), r * std::sin(t)};
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    auto [z0, z1] = normal_pair();
    spare_ = z1;
    has_spare_ = true;
    return z0;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dyadic
