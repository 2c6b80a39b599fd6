#pragma once

#include <cstdint>

namespace tetfit
{
    // Counter-based generator: the value for (seed, stream, counter) is a pure
    // function of its inputs, so draws can be made in any order or in parallel.
    class CounterRng
    {
    public:
        explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

        std::uint64_t bits(std::uint64_t counter) const { return mix(key_ + counter * 0x9e3779b97f4a7c15ULL); }

        // Uniform in [0, 1) with 53 random bits.
        double uniform(std::uint64_t counter) const { return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53; }

        static std::uint64_t mix(std::uint64_t z)
        {
            z += 0x9e3779b97f4a7c15ULL;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            return z ^ (z >> 31);
        }

    private:
        std::uint64_t key_;
    };
}
