#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace moca {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// reproducible across platforms and standard-library versions; the state is
// small enough to serialize into checkpoints for exact training resume.
struct Rng {
    std::array<uint64_t, 4> s{};
    bool have_spare = false;
    double spare = 0.0;

    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s) w = splitmix64(x);
        have_spare = false;
        spare = 0.0;
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t next_u64() {
        uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_f() { return static_cast<float>(uniform()); }

    // uniform integer in [0, n)
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n));
    }

    // standard normal via Box-Muller, spare cached
    double normal() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(theta);
        have_spare = true;
        return r * std::cos(theta);
    }

    float normal_f() { return static_cast<float>(normal()); }

    // Independent child stream; tag keeps siblings decorrelated.
    Rng child(uint64_t tag) {
        uint64_t x = next_u64() ^ (tag * 0x9e3779b97f4a7c15ULL);
        return Rng(splitmix64(x));
    }

    // Pure derivation, independent of any stream state. Used to hand each
    // scene/task its own seed so that worker order never matters.
    static Rng derive(uint64_t seed, uint64_t tag) {
        uint64_t x = seed ^ (tag * 0xd1342543de82ef95ULL);
        uint64_t a = splitmix64(x);
        return Rng(a);
    }
};

}  // namespace moca
