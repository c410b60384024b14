#ifndef MVGAME_STATS_HPP
#define MVGAME_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mvg {

struct Estimate {
    double value = 0;
    double se = 0;
};

// Welford accumulator with pairwise merge.
struct Accumulator {
    double m = 0;
    double m2 = 0;
    std::size_t n = 0;

    void add(double x) {
        ++n;
        double d = x - m;
        m += d / n;
        m2 += d * (x - m);
    }
    void merge(const Accumulator& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        double tot = static_cast<double>(n + o.n);
        double d = o.m - m;
        m += d * o.n / tot;
        m2 += o.m2 + d * d * (static_cast<double>(n) * o.n / tot);
        n += o.n;
    }
    double mean() const { return m; }
    double variance() const { return n < 2 ? 0.0 : std::max(0.0, m2 / (n - 1)); }
    double se() const { return n ? std::sqrt(variance() / n) : 0.0; }
    Estimate estimate() const { return {mean(), se()}; }
};

// Sample mean and standard error of the mean.
inline Estimate mean_se(const std::vector<double>& xs) {
    Accumulator a;
    for (double x : xs) a.add(x);
    return a.estimate();
}

}  // namespace mvg

#endif
