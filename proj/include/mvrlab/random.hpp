#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mvrlab {

/// Seeded generator used everywhere randomness is needed. Streams are derived from a
/// run seed and a purpose tag so adding a consumer does not perturb the others.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static Rng derived(std::uint64_t seed, std::uint64_t stream);

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    std::uint64_t next() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Order-sensitive hash of a block of doubles (bit patterns, not values).
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed);

}  // namespace mvrlab
