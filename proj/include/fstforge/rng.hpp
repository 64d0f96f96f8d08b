// Seeded random-number plumbing. Every random choice in the toolkit draws
// from a named substream derived from a single run seed, so whole runs are
// reproducible bit-for-bit.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fstforge {

// FNV-1a, used to fold substream names into the seed.
inline std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; decorrelates nearby seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent generator for substream `name` of run seed `seed`.
// An optional index distinguishes per-trial or per-item streams.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
    std::uint64_t s = mix_seed(seed ^ hash_name(name));
    s = mix_seed(s + 0x632be59bd9b4e019ull * (index + 1));
    return std::mt19937_64(s);
}

}  // namespace fstforge
