#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream tag, counter), so results do not depend on call order
// across streams, thread scheduling or platform.

#include <cstdint>
#include <span>
#include <utility>

namespace polling {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t tag, std::uint64_t counter) noexcept
{
    return mix64(mix64(mix64(seed) ^ (tag * 0xd1b54a32d192ed03ULL)) ^ counter);
}

/// Uniform double in [0,1) with 53 random bits.
constexpr double to_unit(std::uint64_t x) noexcept
{
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

enum class StreamTag : std::uint64_t {
    arrival1 = 1,
    arrival2 = 2,
    serve1 = 3,
    serve2 = 4,
    switch12 = 5,
    switch21 = 6,
    initial_state = 7,
    shuffle = 8,
    seeds = 9,
};

/// One deterministic substream.
class CounterStream {
public:
    CounterStream() = default;
    CounterStream(std::uint64_t seed, StreamTag tag) : seed_(seed), tag_(static_cast<std::uint64_t>(tag)) {}

    std::uint64_t next_u64() noexcept { return counter_hash(seed_, tag_, counter_++); }
    double uniform() noexcept { return to_unit(next_u64()); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept
    {
        // Lemire's multiply-shift with rejection.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        std::uint64_t low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = -n % n;
            while (low < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t tag_ = 0;
    std::uint64_t counter_ = 0;
};

/// Per-event substreams derived from one base seed.
struct SeedStream {
    explicit SeedStream(std::uint64_t base)
        : seed(base),
          arrival{CounterStream(base, StreamTag::arrival1), CounterStream(base, StreamTag::arrival2)},
          serve{CounterStream(base, StreamTag::serve1), CounterStream(base, StreamTag::serve2)},
          switching{CounterStream(base, StreamTag::switch12), CounterStream(base, StreamTag::switch21)},
          initial(base, StreamTag::initial_state)
    {
    }

    std::uint64_t seed;
    CounterStream arrival[2];
    CounterStream serve[2];
    CounterStream switching[2];  // indexed by origin queue
    CounterStream initial;
};

/// Seed for rollout k of an experiment with base seed seed0.
constexpr std::uint64_t rollout_seed(std::uint64_t seed0, std::uint64_t k) noexcept
{
    return counter_hash(seed0, static_cast<std::uint64_t>(StreamTag::seeds), k);
}

/// Fisher-Yates shuffle driven by a counter stream.
template <class T>
void shuffle(std::span<T> v, CounterStream& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace polling
