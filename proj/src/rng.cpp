#include "fspde/rng.hpp"

namespace fspde {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path, StreamTag tag) {
    const std::uint64_t h = splitmix64(splitmix64(path) ^ static_cast<std::uint64_t>(tag));
    return seed ^ h;
}

}  // namespace fspde
