#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gradharmony {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Every source of randomness derives its seed from (root seed, purpose label)
// so that independent subsystems never share a stream and runs stay
// reproducible no matter which subset of subsystems executes.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ root;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                 std::uint64_t index) {
    std::uint64_t h = derive_seed(root, purpose) ^ (index * 0x9e3779b97f4a7c15ULL);
    return splitmix64(h);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace gradharmony
