#pragma once

#include <cmath>
#include <cstdint>

namespace pblab {

// Counter-based stream: output i of stream (seed, stream_id) is a mix of a
// single 64-bit word, so any stream can be opened at any index without
// generating its predecessors. Draws are identical regardless of which
// other streams were used before.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix(mix(seed + 0x9e3779b97f4a7c15ull) ^ mix(stream_id + 0xbf58476d1ce4e5b9ull))),
          counter_(0) {}

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    // Uniform in [0,1) with 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (one value per call; the pair's
    // second half is dropped to keep the stream position predictable).
    double next_gaussian() {
        double u1 = next_double(), u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % bound);
        std::uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % bound;
    }

    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

// Stream id from up to four component ids (task index, proportion key,
// purpose tag, ...); order-sensitive.
inline std::uint64_t combine_stream_ids(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                                        std::uint64_t d = 0) {
    std::uint64_t h = RngStream::mix(a + 0x2545f4914f6cdd1dull);
    h = RngStream::mix(h ^ (b + 0x9e3779b97f4a7c15ull));
    h = RngStream::mix(h ^ (c + 0xd1b54a32d192ed03ull));
    h = RngStream::mix(h ^ (d + 0x8cb92ba72f3d8dd7ull));
    return h;
}

} // namespace pblab
