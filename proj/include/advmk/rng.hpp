#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace advmk {

/// Seeded RNG with explicitly-coded distributions. std's distribution objects
/// are implementation-defined, so uniform/normal are derived here directly from
/// the mt19937_64 stream to keep runs reproducible and serializable.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    /// Uniform in [0,1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Stateless: one draw per pair, second discarded.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t randint(std::uint64_t n) {
        // rejection sampling keeps the distribution exact
        std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = gen_();
        while (v >= lim) v = gen_();
        return v % n;
    }

    std::string save_state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace advmk
