#pragma once

#include <cstdint>
#include <vector>

namespace prunekit {

// Deterministic random source. All draw algorithms are implemented here
// rather than taken from <random> distributions, whose output is
// implementation-defined; with a fixed seed every sequence below is
// reproducible across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 bits of mantissa.
    double uniform();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (one spare cached).
    double normal();
    // Uniform integer in [0, n), unbiased (rejection sampling). n > 0.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Seeded permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Mixes a base seed with stream coordinates (e.g. step and block indices) so
// independent consumers get decorrelated, reproducible substreams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace prunekit
