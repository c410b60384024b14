#ifndef MVGAME_STOCHASTIC_ENGINE_HPP
#define MVGAME_STOCHASTIC_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "rng.hpp"

namespace mvg {

// Posterior values are kept in [kClampEps, 1 - kClampEps].
inline constexpr double kClampEps = 1e-14;

struct TimeGrid {
    double t0 = 0;
    double T = 1;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double T_, std::size_t n) : t0(t0_), T(T_), n_steps(n) {
        if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
        if (!(T > t0)) throw std::invalid_argument("TimeGrid: dt must be > 0");
    }
    double dt() const { return (T - t0) / static_cast<double>(n_steps); }
    double time(std::size_t k) const { return k == n_steps ? T : t0 + static_cast<double>(k) * dt(); }
    bool operator==(const TimeGrid&) const = default;
};

enum class Measure { P, Q };

struct ChainPath {
    std::vector<int> state;  // state at each grid time, size n_steps + 1
    std::vector<double> jump_times;
};

struct PathBundle {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::vector<double> dW;  // path-major, n_paths * n_steps
    std::vector<ChainPath> chain;  // empty unless requested
    std::uint64_t seed = 0;
    Purpose purpose = Purpose::Test;

    std::span<const double> increments(std::size_t path) const {
        return {dW.data() + path * grid.n_steps, grid.n_steps};
    }
};

struct PosteriorPath {
    TimeGrid grid;
    std::vector<double> P;            // size n_steps + 1
    std::vector<double> innovations;  // size n_steps
    Measure measure = Measure::P;
    std::size_t clamps = 0;
};

// Exact holding-time sampling, then the state at each grid time.
inline ChainPath simulate_chain(const TimeGrid& grid, double q1, double q2, int initial_state, Stream& rng) {
    if (!(q1 > 0) || !(q2 > 0)) throw std::invalid_argument("simulate_chain: rates must be > 0");
    if (initial_state != 1 && initial_state != 2)
        throw std::invalid_argument("simulate_chain: initial state must be 1 or 2");
    ChainPath out;
    out.state.resize(grid.n_steps + 1);
    int m = initial_state;
    double next = grid.t0 + rng.exponential(m == 1 ? q1 : q2);
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        double t = grid.time(k);
        while (next <= t) {
            out.jump_times.push_back(next);
            m = 3 - m;
            next += rng.exponential(m == 1 ? q1 : q2);
        }
        out.state[k] = m;
    }
    return out;
}

inline ChainPath simulate_chain(const TimeGrid& grid, double q1, double q2, int initial_state, std::uint64_t seed) {
    Stream rng(seed, Purpose::Chain, 0);
    return simulate_chain(grid, q1, q2, initial_state, rng);
}

inline PathBundle make_bundle(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, Purpose purpose,
                              const MarketParams* chain_market = nullptr) {
    PathBundle b;
    b.grid = grid;
    b.n_paths = n_paths;
    b.seed = seed;
    b.purpose = purpose;
    b.dW.resize(n_paths * grid.n_steps);
    const double sq = std::sqrt(grid.dt());
    for (std::size_t j = 0; j < n_paths; ++j) {
        Stream rng(seed, purpose, j);
        double* w = b.dW.data() + j * grid.n_steps;
        for (std::size_t k = 0; k < grid.n_steps; ++k) w[k] = sq * rng.normal();
    }
    if (chain_market) {
        for (std::size_t j = 0; j < n_paths; ++j) {
            Stream rng(seed, Purpose::Chain, j);
            b.chain.push_back(
                simulate_chain(grid, chain_market->q1, chain_market->q2, chain_market->state, rng));
        }
    }
    return b;
}

// One Euler step of the filter, under P (drift eta) or Q (drift eta - beta*mpr).
inline double posterior_step(const MarketParams& m, double p, double dt, double dw, Measure meas,
                             std::size_t& clamps) {
    double drift = meas == Measure::Q ? m.q_drift(p) : m.eta(p);
    double pn = p + drift * dt + m.beta(p) * dw;
    if (pn < kClampEps) {
        pn = kClampEps;
        ++clamps;
    } else if (pn > 1.0 - kClampEps) {
        pn = 1.0 - kClampEps;
        ++clamps;
    }
    if (!std::isfinite(pn)) throw NumericalError("posterior_step: non-finite value");
    return pn;
}

inline PosteriorPath simulate_posterior(double p0, const TimeGrid& grid, const MarketParams& m,
                                        std::span<const double> dW, Measure meas) {
    if (!(p0 > 0 && p0 < 1)) throw std::invalid_argument("simulate_posterior: p0 must lie in (0,1)");
    if (!(grid.dt() > 0)) throw std::invalid_argument("simulate_posterior: dt must be > 0");
    if (dW.size() != grid.n_steps) throw std::invalid_argument("simulate_posterior: increments do not match grid");
    PosteriorPath out;
    out.grid = grid;
    out.measure = meas;
    out.P.resize(grid.n_steps + 1);
    out.innovations.assign(dW.begin(), dW.end());
    const double dt = grid.dt();
    double p = std::clamp(p0, kClampEps, 1.0 - kClampEps);
    out.P[0] = p;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        p = posterior_step(m, p, dt, dW[k], meas, out.clamps);
        out.P[k + 1] = p;
    }
    return out;
}

inline std::vector<PosteriorPath> simulate_posterior(double p0, const PathBundle& b, const MarketParams& m,
                                                     Measure meas) {
    std::vector<PosteriorPath> out;
    out.reserve(b.n_paths);
    for (std::size_t j = 0; j < b.n_paths; ++j) out.push_back(simulate_posterior(p0, b.grid, m, b.increments(j), meas));
    return out;
}

inline void check_same_grid(const PosteriorPath& post, std::span<const double> dW, const char* who) {
    if (dW.size() != post.grid.n_steps || post.P.size() != post.grid.n_steps + 1)
        throw std::invalid_argument(std::string(who) + ": mismatched grids");
}

// Euler step of the linear tangent equation, i.e. the derivative of the
// posterior Euler step with respect to its starting point.
inline std::vector<double> simulate_tangent(const PosteriorPath& post, const MarketParams& m,
                                            std::span<const double> dW) {
    check_same_grid(post, dW, "simulate_tangent");
    if (post.measure != Measure::Q) throw std::invalid_argument("simulate_tangent: posterior must be simulated under Q");
    const double dt = post.grid.dt();
    std::vector<double> z(post.grid.n_steps + 1);
    z[0] = 1.0;
    for (std::size_t k = 0; k < post.grid.n_steps; ++k) {
        const double p = post.P[k];
        z[k + 1] = z[k] * (1.0 + m.Gamma(p) * dt + m.Lambda(p) * dW[k]);
    }
    return z;
}

inline std::vector<double> measure_weight(const PosteriorPath& post, const MarketParams& m,
                                          std::span<const double> dW) {
    check_same_grid(post, dW, "measure_weight");
    if (post.measure != Measure::P) throw std::invalid_argument("measure_weight: posterior must be simulated under P");
    const double dt = post.grid.dt();
    std::vector<double> z(post.grid.n_steps + 1);
    double lz = 0;
    z[0] = 1.0;
    for (std::size_t k = 0; k < post.grid.n_steps; ++k) {
        double a = m.mpr(post.P[k]);
        lz += -0.5 * a * a * dt - a * dW[k];
        z[k + 1] = std::exp(lz);
    }
    return z;
}

// Riskfree accrual is exact, the risky part is Euler.
// excess = (mu - r) dt + sigma dW over the step.
inline double wealth_step(double x, double pi, double growth, double excess) {
    return growth * x + pi * excess;
}

}  // namespace mvg

#endif
