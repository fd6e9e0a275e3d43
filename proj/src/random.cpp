#include "mvrlab/random.hpp"

#include <cstring>

namespace mvrlab {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::derived(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL)));
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed) {
    std::uint64_t h = splitmix64(seed);
    for (double v : values) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        h = splitmix64(h ^ bits);
    }
    return h;
}

}  // namespace mvrlab
