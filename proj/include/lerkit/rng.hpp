#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "lerkit/constants.hpp"

namespace lerkit {

// Generator identity written into dataset metadata for reproducibility.
inline constexpr const char* rng_algorithm = "splitmix64+mt19937_64+box-muller";

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Independent stream seed for a (master seed, tuple index) pair, so
// parallel and serial sweeps see identical draws.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index * 0xD1B54A32D192ED03ULL + 1));
}

// mt19937_64 is bit-specified by the standard; the Gaussian transform is
// hand-rolled because std::normal_distribution is not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {  // standard normal, Box-Muller
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * pi * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace lerkit
