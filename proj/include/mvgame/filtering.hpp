#ifndef MVGAME_FILTERING_HPP
#define MVGAME_FILTERING_HPP

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "core_model.hpp"
#include "io.hpp"
#include "stochastic_engine.hpp"

namespace mvg {

struct Truth {
    TimeGrid grid;
    std::vector<double> S;            // n_steps + 1
    std::vector<double> log_returns;  // n_steps
    std::vector<double> dW;           // driving Brownian increments
    std::vector<double> mu;           // drift held over each step
    ChainPath chain;                  // alternating mode only
    int true_state = 1;               // constant mode only
};

// Log-Euler GBM, exact for a drift held constant over each step.
inline Truth simulate_truth(const MarketParams& m, const TimeGrid& grid, std::uint64_t seed,
                            std::uint64_t realization = 0, double s0 = 1.0) {
    m.validate();
    Truth tr;
    tr.grid = grid;
    tr.true_state = m.state;
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt(), sq = std::sqrt(dt);
    if (m.alternating()) {
        Stream crng(seed, Purpose::Chain, realization);
        tr.chain = simulate_chain(grid, m.q1, m.q2, m.state, crng);
    }
    Stream rng(seed, Purpose::Truth, realization);
    tr.S.resize(n + 1);
    tr.log_returns.resize(n);
    tr.dW.resize(n);
    tr.mu.resize(n);
    tr.S[0] = s0;
    for (std::size_t k = 0; k < n; ++k) {
        double mu = m.alternating() ? m.mu(tr.chain.state[k]) : m.mu(m.state);
        double dw = sq * rng.normal();
        double dl = (mu - 0.5 * m.sigma * m.sigma) * dt + m.sigma * dw;
        tr.mu[k] = mu;
        tr.dW[k] = dw;
        tr.log_returns[k] = dl;
        tr.S[k + 1] = tr.S[k] * std::exp(dl);
    }
    return tr;
}

inline double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// Explicit Bayes posterior from cumulative log-returns (constant mode only).
inline PosteriorPath posterior_closed_form(std::span<const double> log_returns, const TimeGrid& grid, double prior,
                                           const MarketParams& m) {
    if (m.alternating()) throw std::invalid_argument("posterior_closed_form: no closed form in alternating mode");
    if (!(prior >= 0 && prior <= 1)) throw std::invalid_argument("posterior_closed_form: prior must lie in [0,1]");
    if (log_returns.size() != grid.n_steps) throw std::invalid_argument("posterior_closed_form: size mismatch");
    const double s2 = m.sigma * m.sigma, dt = grid.dt();
    const double a1 = m.mu1 - 0.5 * s2, a2 = m.mu2 - 0.5 * s2;
    const double slope = (m.mu1 - m.mu2) / s2;
    const double rate = (a1 * a1 - a2 * a2) / (2.0 * s2);
    PosteriorPath out;
    out.grid = grid;
    out.measure = Measure::P;
    out.P.resize(grid.n_steps + 1);
    out.innovations.resize(grid.n_steps);
    auto post = [&](double L, double u) {
        if (prior == 0.0 || prior == 1.0 || m.mu1 == m.mu2) return prior;
        return logistic(std::log(prior / (1.0 - prior)) + slope * L - rate * u);
    };
    double L = 0;
    out.P[0] = prior;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        out.innovations[k] = (log_returns[k] - (m.theta(out.P[k]) - 0.5 * s2) * dt) / m.sigma;
        L += log_returns[k];
        out.P[k + 1] = post(L, grid.time(k + 1) - grid.t0);
    }
    return out;
}

// Filter SDE driven by innovations computed from observed log-returns.
inline PosteriorPath posterior_from_log_returns(std::span<const double> log_returns, double prior,
                                                const MarketParams& m, const TimeGrid& grid) {
    if (!(prior > 0 && prior < 1)) throw std::invalid_argument("posterior_from_observations: prior must lie in (0,1)");
    if (log_returns.size() != grid.n_steps) throw std::invalid_argument("posterior_from_observations: size mismatch");
    const double s2 = m.sigma * m.sigma, dt = grid.dt();
    PosteriorPath out;
    out.grid = grid;
    out.measure = Measure::P;
    out.P.resize(grid.n_steps + 1);
    out.innovations.resize(grid.n_steps);
    double p = std::clamp(prior, kClampEps, 1.0 - kClampEps);
    out.P[0] = p;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        double dwh = (log_returns[k] - (m.theta(p) - 0.5 * s2) * dt) / m.sigma;
        out.innovations[k] = dwh;
        p = posterior_step(m, p, dt, dwh, Measure::P, out.clamps);
        out.P[k + 1] = p;
    }
    return out;
}

inline PosteriorPath posterior_from_observations(std::span<const double> stock, double prior, const MarketParams& m,
                                                 const TimeGrid& grid) {
    if (stock.size() != grid.n_steps + 1) throw std::invalid_argument("posterior_from_observations: size mismatch");
    std::vector<double> lr(grid.n_steps);
    for (std::size_t k = 0; k <= grid.n_steps; ++k)
        if (!(stock[k] > 0)) throw std::invalid_argument("posterior_from_observations: nonpositive stock value");
    for (std::size_t k = 0; k < grid.n_steps; ++k) lr[k] = std::log(stock[k + 1] / stock[k]);
    return posterior_from_log_returns(lr, prior, m, grid);
}

inline void write_posterior_csv(std::ostream& os, const PosteriorPath& post) {
    os << "t,P,innovation_increment\n";
    for (std::size_t k = 0; k < post.P.size(); ++k) {
        os << num(post.grid.time(k)) << ',' << num(post.P[k]) << ',';
        if (k < post.innovations.size()) os << num(post.innovations[k]);
        os << '\n';
    }
}

}  // namespace mvg

#endif
