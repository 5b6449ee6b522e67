#pragma once

#include <cstdint>
#include <random>

namespace ookfso {

// Seeded pseudo-random stream. Children derived with fork() depend only on
// the parent seed and the tag, never on how many draws the parent has made.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    RandomStream fork(std::uint64_t tag) const {
        return RandomStream(mix(seed_ ^ mix(tag + 0x632be59bd9b4e019ULL)));
    }

    std::mt19937_64& engine() noexcept { return engine_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() { return normal_(engine_); }

    bool bit() { return (engine_() >> 63) != 0; }

    static std::uint64_t mix(std::uint64_t x) noexcept {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace ookfso
