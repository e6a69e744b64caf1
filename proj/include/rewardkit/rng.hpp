#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace rewardkit {

// Portable random source. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard; the std:: distributions are not, so the
// derived draws below are spelled out:
//   uniform01  = (x >> 11) * 2^-53
//   below(n)   = rejection sampling on x mod n over the largest multiple of n
//   gaussian   = Box-Muller, both outputs used, u1 taken from (0, 1]
// Any implementation following these rules reproduces the same streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// 64-bit FNV-1a over bytes, followed by the splitmix64 finalizer for lanes.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Hashes a sequence of fields with a length prefix per field so that
// ("ab","c") and ("a","bc") never collide structurally.
class FieldHasher {
public:
    FieldHasher& add(std::string_view field) {
        const std::uint64_t len = field.size();
        for (int i = 0; i < 8; ++i) {
            h_ ^= static_cast<unsigned char>(len >> (8 * i));
            h_ *= 0x100000001b3ULL;
        }
        h_ = fnv1a(field, h_);
        return *this;
    }
    FieldHasher& add(std::uint64_t value) {
        for (int i = 0; i < 8; ++i) {
            h_ ^= static_cast<unsigned char>(value >> (8 * i));
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    std::uint64_t digest() const { return splitmix64(h_); }

private:
    std::uint64_t h_ = kFnvOffset;
};

}  // namespace rewardkit
