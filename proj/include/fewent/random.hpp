#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace fewent {

// Seeded generator with a fully pinned output sequence.
//
// The engine is std::mt19937_64, whose sequence the standard fixes. The
// standard distributions are implementation-defined, so bounded integers use
// rejection sampling on the raw 64-bit output and reals take the top 53 bits.
// Every shuffle/sample routine here is therefore reproducible across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform real in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates, walking from the back.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

    // `count` distinct indices from [0, n) in draw order (partial Fisher-Yates
    // from the front).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < count && i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(std::min(count, n));
        return idx;
    }

    // Derive an independent child seed (used to give each subsystem its own
    // stream while funnelling everything through the run seed).
    std::uint64_t fork() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

private:
    std::mt19937_64 engine_;
};

}  // namespace fewent
