#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dsc {

// Stable 64-bit hashing used for split assignment and derived seeds.
// Must produce identical values on every platform and in every run, so we
// deliberately avoid std::hash.

constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Incremental FNV-1a accumulator with a splitmix64 finalizer.
class StableHash {
public:
    StableHash& add(std::string_view s) {
        for (unsigned char c : s) step(c);
        step(0xff);  // field separator, keeps ("ab","c") != ("a","bc")
        return *this;
    }

    StableHash& add(uint64_t v) {
        for (int i = 0; i < 8; ++i) step(static_cast<unsigned char>(v >> (8 * i)));
        step(0xfe);
        return *this;
    }

    uint64_t digest() const { return splitmix64(state_); }

private:
    void step(unsigned char byte) {
        state_ ^= byte;
        state_ *= 0x100000001b3ULL;
    }

    uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline uint64_t stable_hash(uint64_t seed, std::string_view a) {
    return StableHash().add(seed).add(a).digest();
}

inline uint64_t stable_hash(uint64_t seed, std::string_view a, std::string_view b) {
    return StableHash().add(seed).add(a).add(b).digest();
}

inline uint64_t stable_hash(uint64_t seed, std::string_view a, uint64_t b) {
    return StableHash().add(seed).add(a).add(b).digest();
}

inline uint64_t stable_hash(uint64_t seed, std::string_view a, std::string_view b, uint64_t c) {
    return StableHash().add(seed).add(a).add(b).add(c).digest();
}

// Maps a hash to [0, 1) with 53 bits of resolution.
inline double unit_interval(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace dsc
