#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "errors.hpp"

namespace sfconv {

// splitmix64 finalizer, used to derive independent stream seeds from one
// master seed without correlated low bits.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic RNG: mt19937_64 engine plus hand-rolled distribution
// transforms. Standard-library distributions are implementation defined,
// so they never appear here; every draw is reproducible bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t tag) {
        return Rng(mix64(seed ^ mix64(tag)));
    }

    std::uint64_t next_u64() { return eng_(); }

    // uniform on [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the spare value is cached and serialized with the state
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform index in [0, n); modulo bias is irrelevant at these ranges
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(eng_() % static_cast<std::uint64_t>(n));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    std::string save_state() const {
        std::ostringstream os;
        os << eng_ << " " << (have_spare_ ? 1 : 0) << " "
           << std::bit_cast<std::uint64_t>(spare_);
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int spare_flag = 0;
        std::uint64_t spare_bits = 0;
        if (!(is >> eng_ >> spare_flag >> spare_bits))
            throw IoError("malformed RNG state");
        have_spare_ = spare_flag != 0;
        spare_ = std::bit_cast<double>(spare_bits);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sfconv
