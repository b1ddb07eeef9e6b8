#ifndef MFS_RNG_HPP
#define MFS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace mfs {

// All stochastic code in the library draws through this wrapper instead of
// the std::* distributions, whose output is implementation-defined. The
// manifest written by the CLI names this scheme ("mt19937_64+boxmuller") so
// artifacts stay byte-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Index in [0, n) with probability proportional to weights[k].
    template <class Weights>
    int categorical(const Weights& weights, int n) {
        const double u = uniform();
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            acc += weights[k];
            if (u < acc) return k;
        }
        return n - 1;
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 mix, used to derive independent substreams from a master seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace mfs

#endif
