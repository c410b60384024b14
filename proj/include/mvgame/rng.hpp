#ifndef MVGAME_RNG_HPP
#define MVGAME_RNG_HPP

#include <cstdint>
#include <random>

namespace mvg {

// Streams are keyed by (seed, purpose, a, b). Different purposes never share
// increments, so nested estimators stay independent.
enum class Purpose : std::uint64_t {
    Truth = 1,
    Chain = 2,
    InnerC = 3,
    InnerDc = 4,
    InnerC2 = 5,
    Objective = 6,
    ObjectiveChain = 7,
    Posterior = 8,
    Table = 9,
    Test = 10,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, Purpose p, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(p));
    h = splitmix64(h ^ a);
    return splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
}

using Engine = std::mt19937_64;

class Stream {
public:
    Stream(std::uint64_t seed, Purpose p, std::uint64_t a, std::uint64_t b = 0)
        : eng_(stream_seed(seed, p, a, b)) {}

    double normal() { return nd_(eng_); }
    double uniform() { return ud_(eng_); }
    // Exp(rate) holding time.
    double exponential(double rate) { return std::exponential_distribution<double>(rate)(eng_); }
    Engine& engine() { return eng_; }

private:
    Engine eng_;
    std::normal_distribution<double> nd_{0.0, 1.0};
    std::uniform_real_distribution<double> ud_{0.0, 1.0};
};

}  // namespace mvg

#endif
