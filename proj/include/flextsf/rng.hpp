#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace flextsf {

// Counter-based deterministic generator: splitmix64 finalizer applied to
// seed + counter * golden ratio. The draw at counter c depends only on
// (seed, c), so streams replay exactly and can be forked without shared
// mutable state. Integer outputs are platform-exact; the float transforms
// additionally depend on libm's log/cos rounding.
class RngState {
public:
    explicit RngState(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    std::uint64_t next_u64() {
        counter_ += 1;
        return mix(seed_ + 0x9e3779b97f4a7c15ULL * counter_);
    }

    // uniform in [0, 1), 53 random bits
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    // Box-Muller; always consumes two uniforms, no cached spare.
    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925287 * u2);
    }

    double next_exponential(double rate) {
        return -std::log1p(-next_uniform()) / rate;
    }

    // integer in [0, n); n must be > 0
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // independent substream, reproducible from (seed, stream) alone
    RngState fork(std::uint64_t stream) const {
        return RngState(mix(seed_ ^ mix(0xa0761d6478bd642fULL + stream)));
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace flextsf
