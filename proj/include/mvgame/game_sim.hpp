#ifndef MVGAME_GAME_SIM_HPP
#define MVGAME_GAME_SIM_HPP

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cauchy.hpp"
#include "core_model.hpp"
#include "equilibrium.hpp"
#include "filtering.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "stats.hpp"
#include "stochastic_engine.hpp"

namespace mvg {

enum class Information { Full, Partial };
enum class StrategyChoice { Equilibrium, FirstTermOnly, FullInfoBaseline };

inline const char* to_string(StrategyChoice c) {
    switch (c) {
        case StrategyChoice::Equilibrium: return "equilibrium";
        case StrategyChoice::FirstTermOnly: return "first-term-only";
        case StrategyChoice::FullInfoBaseline: return "full-info-baseline";
    }
    return "?";
}

struct Scenario {
    Model model;
    Information info = Information::Partial;
    StrategyChoice choice = StrategyChoice::Equilibrium;
    double prior = 0.5;
    std::size_t n_steps = 1000;
    std::vector<double> x0;
    const CauchyTable* table = nullptr;
    std::uint64_t seed = 1;

    // Full-info baseline reads the truth even in a partial-information mode.
    bool reads_truth() const { return info == Information::Full || choice == StrategyChoice::FullInfoBaseline; }

    StrategyKind kind() const {
        if (reads_truth())
            return model.market().alternating() ? StrategyKind::FullInfoMarkov : StrategyKind::FullInfoConstant;
        return choice == StrategyChoice::FirstTermOnly ? StrategyKind::PartialInfoFirstTermOnly
                                                       : StrategyKind::PartialInfo;
    }

    void validate() const {
        if (x0.size() != model.N()) throw ConfigError("investors.initial_wealth: one value per investor required");
        if (!(prior > 0 && prior < 1)) throw ConfigError("prior: must lie in (0,1)");
        if (n_steps < 1) throw ConfigError("simulation.n_steps: must be >= 1");
        if (info == Information::Full && choice == StrategyChoice::FirstTermOnly)
            throw ConfigError("strategy: first-term-only needs a partial-information mode");
        if (kind() == StrategyKind::PartialInfo && !table)
            throw ConfigError("tables: partial-information equilibrium needs Cauchy tables");
    }
};

struct SimResult {
    std::size_t realization = 0;
    std::uint64_t seed = 0;
    TimeGrid grid;
    std::vector<double> X;   // (n_steps + 1) x N
    std::vector<double> pi;  // (n_steps + 1) x N
    PosteriorPath posterior;
    Truth truth;
    std::vector<bool> defaulted;
    std::size_t defaults = 0;
};

inline SimResult run_realization(const Scenario& sc, std::size_t realization) {
    const auto& m = sc.model.market();
    const std::size_t N = sc.model.N(), n = sc.n_steps;
    const TimeGrid grid(0.0, m.T, n);
    SimResult res;
    res.realization = realization;
    res.seed = sc.seed;
    res.grid = grid;
    res.truth = simulate_truth(m, grid, sc.seed, realization);
    // The filter sees only log-returns.
    res.posterior = posterior_from_log_returns(res.truth.log_returns, sc.prior, m, grid);
    const StrategyKind kind = sc.kind();
    const bool truth_access = sc.reads_truth();
    res.X.resize((n + 1) * N);
    res.pi.resize((n + 1) * N);
    std::vector<StrategyParts> parts(N);
    std::vector<double> lo(sc.x0);
    for (std::size_t i = 0; i < N; ++i) res.X[i] = sc.x0[i];
    const double dt = grid.dt(), growth = std::exp(m.r * dt);
    for (std::size_t k = 0; k <= n; ++k) {
        MarketState st;
        if (!truth_access) st = MarketState::posterior(res.posterior.P[k]);
        else if (m.alternating()) st = MarketState::regime(res.truth.chain.state[k]);
        strategy_parts_all(kind, grid.time(k), st, sc.model, sc.table, parts);
        double* pk = &res.pi[k * N];
        for (std::size_t i = 0; i < N; ++i) pk[i] = parts[i].total();
        if (k == n) break;
        const double excess = (res.truth.mu[k] - m.r) * dt + m.sigma * res.truth.dW[k];
        const double* xk = &res.X[k * N];
        double* xn = &res.X[(k + 1) * N];
        for (std::size_t i = 0; i < N; ++i) {
            xn[i] = wealth_step(xk[i], pk[i], growth, excess);
            lo[i] = std::min(lo[i], xn[i]);
        }
    }
    for (std::size_t i = 0; i < N * (n + 1); ++i)
        if (!std::isfinite(res.X[i])) throw NumericalError("run_realization: non-finite wealth, realization " +
                                                           std::to_string(realization));
    res.defaulted.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        res.defaulted[i] = lo[i] < 0.0;
        res.defaults += res.defaulted[i];
    }
    return res;
}

struct LossDistribution {
    std::vector<std::size_t> hist;  // k = 0..N
    std::size_t R = 0;
    std::vector<SimResult> results;
    std::size_t posterior_clamps = 0;
    std::size_t posterior_steps = 0;

    double prob(std::size_t k) const { return R ? static_cast<double>(hist[k]) / R : 0.0; }
    double all_default() const { return prob(hist.size() - 1); }
    double any_default() const { return 1.0 - prob(0); }
};

inline LossDistribution loss_distribution(const Scenario& sc, std::size_t R, bool keep_paths = true) {
    if (R < 1) throw std::invalid_argument("loss_distribution: need at least one realization");
    sc.validate();
    std::vector<SimResult> all(R);
    parallel_for(R, [&](std::size_t r) {
        try {
            all[r] = run_realization(sc, r);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (seed " + std::to_string(sc.seed) + ", realization " +
                                 std::to_string(r) + ")");
        }
    });
    LossDistribution ld;
    ld.R = R;
    ld.hist.assign(sc.model.N() + 1, 0);
    for (auto& res : all) {
        ++ld.hist[res.defaults];
        ld.posterior_clamps += res.posterior.clamps;
        ld.posterior_steps += sc.n_steps;
        if (!keep_paths) {
            res.X.clear();
            res.pi.clear();
            res.posterior.P.clear();
            res.posterior.innovations.clear();
            res.truth = Truth{};
        }
    }
    ld.results = std::move(all);
    return ld;
}

// ---------------------------------------------------------------------------
// CSV artifacts.

inline void write_wealth_csv(std::ostream& os, const LossDistribution& ld, std::size_t stride = 1) {
    os << "realization,t,i,X,pi\n";
    for (const auto& res : ld.results) {
        const std::size_t N = res.defaulted.size(), n = res.grid.n_steps;
        for (std::size_t k = 0; k <= n; ++k) {
            if (k % stride != 0 && k != n) continue;
            for (std::size_t i = 0; i < N; ++i)
                os << res.realization << ',' << num(res.grid.time(k)) << ',' << i + 1 << ',' << num(res.X[k * N + i])
                   << ',' << num(res.pi[k * N + i]) << '\n';
        }
    }
}

inline void write_posterior_paths_csv(std::ostream& os, const LossDistribution& ld, std::size_t stride = 1) {
    os << "realization,t,P,innovation_increment\n";
    for (const auto& res : ld.results) {
        const auto& post = res.posterior;
        const std::size_t n = res.grid.n_steps;
        for (std::size_t k = 0; k <= n; ++k) {
            if (k % stride != 0 && k != n) continue;
            os << res.realization << ',' << num(res.grid.time(k)) << ',' << num(post.P[k]) << ',';
            if (k < n) os << num(post.innovations[k]);
            os << '\n';
        }
    }
}

inline void write_loss_hist_csv(std::ostream& os, const LossDistribution& ld) {
    os << "k,count\n";
    for (std::size_t k = 0; k < ld.hist.size(); ++k) os << k << ',' << ld.hist[k] << '\n';
}

}  // namespace mvg

#endif
