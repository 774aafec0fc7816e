#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace webweave {

// Seeding scheme
// --------------
// Every random quantity is a pure function of a 64-bit root seed.  Child
// seeds are derived with `derive_seed(parent, index)`, giving the tree
//   experiment seed -> replica seed -> (site | stream)
// so adding replicas never perturbs existing ones.  Lattice increments are
// counter-based: the value at site (i, j) is hashed from (seed, i, j) and does
// not depend on which other sites were generated.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept
{
  return splitmix64(parent ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Counter-based hash of a lattice site; independent of generation order.
constexpr std::uint64_t site_hash(std::uint64_t seed, std::int64_t i, std::int64_t j) noexcept
{
  std::uint64_t h = splitmix64(seed ^ 0xd1b54a32d192ed03ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(i));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(j) * 0x9e3779b97f4a7c15ULL));
  return h;
}

/// Maps 64 random bits to a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept
{
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// xoshiro256** stream generator, seeded through splitmix64.
class Xoshiro256
{
public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) noexcept
  {
    std::uint64_t s = seed;
    for (auto &w : state_) {
      s = splitmix64(s);
      w = s;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept
  {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return to_unit((*this)()); }

  /// Uniform in (0, 1].
  double uniform_open_closed() noexcept { return 1.0 - uniform(); }

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
  {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

/// Reproducible standard normal sampler: Boost's ziggurat over a seeded stream.
class NormalStream
{
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }
  double uniform() noexcept { return engine_.uniform(); }
  Xoshiro256 &engine() noexcept { return engine_; }

private:
  Xoshiro256 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace webweave
