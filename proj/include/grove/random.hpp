#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace grove {

// Deterministic random stream based on the PCG32 generator (XSH-RR output
// function, 64-bit LCG state, odd stream increment). Every (seed, stream_id)
// pair selects an independent sequence, and the algorithm is fixed so that
// draws are bit-identical across platforms. Reference vectors: seeding with
// (initstate=42, initseq=54) yields 0xa15c02b7, 0x7b47f409, 0xba1d3330,
// 0x83d2f293, 0xbfa4784b, 0xcbed606e.
class RandomStream {
public:
    RandomStream(std::uint64_t initstate, std::uint64_t initseq) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        const std::uint64_t lo = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0, bound) without modulo bias (Lemire rejection).
    std::uint32_t next_bounded(std::uint32_t bound) {
        std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * bound;
        auto low = static_cast<std::uint32_t>(m);
        if (low < bound) {
            const std::uint32_t threshold = (-bound) % bound;
            while (low < threshold) {
                m = static_cast<std::uint64_t>(next_u32()) * bound;
                low = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    // Uniform double, strictly inside (0, 1); 53 random mantissa bits.
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    bool next_bernoulli(double p) { return next_double() < p; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
};

// Independent deterministic stream for (seed, stream index). Identical pairs
// yield identical streams everywhere; distinct indices select distinct PCG32
// sequences over the same seeded state.
inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t index) {
    return RandomStream(seed, index);
}

// Record of one tree's subsampling draws. `indices` are sorted training row
// numbers (0-based); in double-sample modes i_half/j_half partition them with
// |i_half| = floor(s/2). Both halves are empty in single-sample modes.
struct SubsampleRecord {
    int tree_index = 0;
    std::vector<int> indices;
    std::vector<int> i_half;
    std::vector<int> j_half;
};

// Size-s subset of {0,...,n-1}, uniform over subsets, no repeats. Partial
// Fisher-Yates; result sorted ascending.
inline std::vector<int> draw_subsample(RandomStream& stream, int n, int s) {
    if (s < 1 || s > n) {
        throw std::invalid_argument("draw_subsample: need 1 <= s <= n, got s=" +
                                    std::to_string(s) + ", n=" + std::to_string(n));
    }
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int t = 0; t < s; ++t) {
        const int r = t + static_cast<int>(stream.next_bounded(static_cast<std::uint32_t>(n - t)));
        std::swap(pool[t], pool[r]);
    }
    pool.resize(s);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Uniformly random partition of `indices` into halves of size floor(s/2) and
// ceil(s/2); both outputs sorted.
inline std::pair<std::vector<int>, std::vector<int>>
split_halves(RandomStream& stream, const std::vector<int>& indices) {
    const int s = static_cast<int>(indices.size());
    if (s < 2) throw std::invalid_argument("split_halves: need at least 2 indices");
    std::vector<int> shuffled = indices;
    for (int t = 0; t < s - 1; ++t) {
        const int r = t + static_cast<int>(stream.next_bounded(static_cast<std::uint32_t>(s - t)));
        std::swap(shuffled[t], shuffled[r]);
    }
    const int half = s / 2;
    std::vector<int> i_half(shuffled.begin(), shuffled.begin() + half);
    std::vector<int> j_half(shuffled.begin() + half, shuffled.end());
    std::sort(i_half.begin(), i_half.end());
    std::sort(j_half.begin(), j_half.end());
    return {std::move(i_half), std::move(j_half)};
}

}  // namespace grove
