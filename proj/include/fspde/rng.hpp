#pragma once

#include <cstdint>
#include <random>

namespace fspde {

// Independent random fields drawn for one path.
enum class StreamTag : std::uint64_t {
    gaussian = 1,
    poisson = 2,
    marks = 3,
    initial = 4,
};

std::uint64_t splitmix64(std::uint64_t x);

// seed xor hash(path, tag). Every (path, tag) pair gets its own stream, so
// ensemble members can be generated in any order or in parallel and still
// reproduce the same numbers.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path, StreamTag tag);

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t path, StreamTag tag) {
    return Engine(stream_seed(seed, path, tag));
}

}  // namespace fspde
