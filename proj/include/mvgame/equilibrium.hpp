#ifndef MVGAME_EQUILIBRIUM_HPP
#define MVGAME_EQUILIBRIUM_HPP

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cauchy.hpp"
#include "core_model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "stochastic_engine.hpp"

namespace mvg {

enum class StrategyKind { FullInfoConstant, FullInfoMarkov, PartialInfo, PartialInfoFirstTermOnly };

inline const char* to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::FullInfoConstant: return "full-info-constant";
        case StrategyKind::FullInfoMarkov: return "full-info-markov";
        case StrategyKind::PartialInfo: return "partial-info";
        case StrategyKind::PartialInfoFirstTermOnly: return "partial-info-first-term";
    }
    return "?";
}

// What a strategy may observe besides time and wealth.
struct MarketState {
    enum class Tag { None, Posterior, Regime };
    Tag tag = Tag::None;
    double p = 0;
    int m = 0;

    static MarketState none() { return {}; }
    static MarketState posterior(double p) { return {Tag::Posterior, p, 0}; }
    static MarketState regime(int m) { return {Tag::Regime, 0.0, m}; }
};

struct StrategyParts {
    double first = 0;
    double second = 0;
    double total() const { return first + second; }
};

namespace detail {

inline void require_state(StrategyKind kind, const MarketState& s, const CauchyTable* table) {
    switch (kind) {
        case StrategyKind::FullInfoConstant:
            return;
        case StrategyKind::FullInfoMarkov:
            if (s.tag != MarketState::Tag::Regime || (s.m != 1 && s.m != 2))
                throw std::invalid_argument("strategy: full-info Markov strategy needs a regime state");
            return;
        case StrategyKind::PartialInfo:
            if (!table) throw std::invalid_argument("strategy: partial-info strategy needs a Cauchy table");
            [[fallthrough]];
        case StrategyKind::PartialInfoFirstTermOnly:
            if (s.tag != MarketState::Tag::Posterior || !(s.p >= 0 && s.p <= 1))
                throw std::invalid_argument("strategy: partial-info strategy needs a posterior state");
            return;
    }
}

}  // namespace detail

// Every investor at once; parts[i] gets the two terms.
inline void strategy_parts_all(StrategyKind kind, double t, const MarketState& s, const Model& model,
                               const CauchyTable* table, std::span<StrategyParts> parts) {
    detail::require_state(kind, s, table);
    const auto& m = model.market();
    const auto& c = model.coef();
    const std::size_t N = model.N();
    const double disc = std::exp(-m.r * (m.T - t)), s2 = m.sigma * m.sigma;
    double ex = 0;
    switch (kind) {
        case StrategyKind::FullInfoConstant: ex = m.mu(m.state) - m.r; break;
        case StrategyKind::FullInfoMarkov: ex = m.mu(s.m) - m.r; break;
        default: ex = m.theta(s.p) - m.r; break;
    }
    for (std::size_t i = 0; i < N; ++i) {
        parts[i].first = disc * ex / s2 * (c.kappa[i] + c.weight[i] * c.kappa_bar);
        parts[i].second = 0.0;
    }
    if (kind == StrategyKind::PartialInfo) {
        const double beta = m.beta(s.p);
        if (beta == 0.0) return;
        double buf_small[16];
        std::vector<double> buf_big;
        double* dc = buf_small;
        if (N > 16) {
            buf_big.resize(N);
            dc = buf_big.data();
        }
        table->dc_all(t, s.p, std::span<double>(dc, N));
        double bar = 0;
        for (std::size_t i = 0; i < N; ++i) bar += dc[i];
        bar /= static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) parts[i].second = -disc * beta / m.sigma * (dc[i] + c.weight[i] * bar);
    }
}

inline StrategyParts strategy_parts(StrategyKind kind, double t, const MarketState& s, std::size_t i,
                                    const Model& model, const CauchyTable* table = nullptr) {
    if (i >= model.N()) throw std::invalid_argument("strategy: investor index out of range");
    std::vector<StrategyParts> parts(model.N());
    strategy_parts_all(kind, t, s, model, table, parts);
    return parts[i];
}

inline double strategy_value(StrategyKind kind, double t, const MarketState& s, std::size_t i, const Model& model,
                             const CauchyTable* table = nullptr) {
    return strategy_parts(kind, t, s, i, model, table).total();
}

inline double aggregate_strategy(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("aggregate_strategy: empty vector");
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

// Full-information regime-switching C_i including the variance contributed by
// chain jumps; backward two-state ODE integrated with RK4.
inline double markov_C_with_jumps(double t, int state, std::size_t i, const Model& model, std::size_t steps = 4000) {
    const auto& m = model.market();
    if (!m.alternating()) throw std::invalid_argument("markov_C_with_jumps: requires alternating mode");
    const double tau = model.T() - t;
    if (tau <= 0) return 0.0;
    const double Q1 = Q_markov(model, i, 1, SourceVariant::Ansatz), Q2 = Q_markov(model, i, 2, SourceVariant::Ansatz);
    const double g = model.investors()[i].gamma;
    auto jump = [&](double s) {
        const double d = closed_form_c_markov(model.T() - s, 1, i, model) - closed_form_c_markov(model.T() - s, 2, i, model);
        return d * d;
    };
    auto rhs = [&](double s, double c1, double c2, double& d1, double& d2) {
        const double j = 0.5 * g * jump(s);
        d1 = Q1 - m.q1 * j + m.q1 * (c2 - c1);
        d2 = Q2 - m.q2 * j + m.q2 * (c1 - c2);
    };
    const double h = tau / static_cast<double>(steps);
    double c1 = 0, c2 = 0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double s = k * h;
        double a1, a2, b1, b2, e1, e2, f1, f2;
        rhs(s, c1, c2, a1, a2);
        rhs(s + h / 2, c1 + h / 2 * a1, c2 + h / 2 * a2, b1, b2);
        rhs(s + h / 2, c1 + h / 2 * b1, c2 + h / 2 * b2, e1, e2);
        rhs(s + h, c1 + h * e1, c2 + h * e2, f1, f2);
        c1 += h / 6 * (a1 + 2 * b1 + 2 * e1 + f1);
        c2 += h / 6 * (a2 + 2 * b2 + 2 * e2 + f2);
    }
    return state == 1 ? c1 : c2;
}

// V_i = (1 - lM_i/N) e^{r(T-t)} x_i - lM_i e^{r(T-t)} xbar_(-i) + C_i.
inline double value_function(StrategyKind kind, double t, std::span<const double> x, const MarketState& s,
                             std::size_t i, const Model& model, const CauchyTable* table = nullptr,
                             SourceVariant v = SourceVariant::Ansatz) {
    const std::size_t N = model.N();
    if (x.size() != N) throw std::invalid_argument("value_function: wealth vector has wrong size");
    if (i >= N) throw std::invalid_argument("value_function: investor index out of range");
    if (kind == StrategyKind::PartialInfoFirstTermOnly)
        throw std::invalid_argument("value_function: the first-term-only profile is not an equilibrium");
    detail::require_state(kind, s, table);
    const auto& m = model.market();
    const double tau = m.T - t, g = std::exp(m.r * tau), lm = model.investors()[i].lambda_m;
    double sum = 0;
    for (double xi : x) sum += xi;
    const double xbar_mi = (sum - x[i]) / static_cast<double>(N);
    const double terminal = (1.0 - lm / N) * g * x[i] - lm * g * xbar_mi;
    double C = 0;
    switch (kind) {
        case StrategyKind::FullInfoConstant: C = tau * N_const(model, i, m.mu(m.state), v); break;
        case StrategyKind::FullInfoMarkov:
            C = v == SourceVariant::Ansatz ? markov_C_with_jumps(t, s.m, i, model)
                                           : closed_form_C_markov(t, s.m, i, model, v);
            break;
        default: C = tau > 0 ? table->C_at(i, t, s.p) : 0.0; break;
    }
    return terminal + C;
}

// ---------------------------------------------------------------------------
// Monte Carlo of the mean-variance objective.

using ProfileFn = std::function<void(double t, const MarketState& s, std::span<double> pi)>;

inline ProfileFn equilibrium_profile(StrategyKind kind, const Model& model, const CauchyTable* table = nullptr) {
    return [kind, &model, table](double t, const MarketState& s, std::span<double> pi) {
        StrategyParts buf[16];
        std::vector<StrategyParts> big;
        std::span<StrategyParts> parts(buf, std::min<std::size_t>(16, pi.size()));
        if (pi.size() > 16) {
            big.resize(pi.size());
            parts = big;
        }
        strategy_parts_all(kind, t, s, model, table, parts);
        for (std::size_t i = 0; i < pi.size(); ++i) pi[i] = parts[i].total();
    };
}

// Merton ratio with the relative-performance terms dropped.
inline ProfileFn merton_profile(const Model& model) {
    return [&model](double t, const MarketState&, std::span<double> pi) {
        const auto& m = model.market();
        const double disc = std::exp(-m.r * (m.T - t));
        for (std::size_t i = 0; i < pi.size(); ++i)
            pi[i] = disc * (m.mu(m.state) - m.r) / (m.sigma * m.sigma * model.investors()[i].gamma);
    };
}

inline ProfileFn perturbed_profile(ProfileFn base, std::size_t i, double t0, double h, double delta) {
    return [base = std::move(base), i, t0, h, delta](double t, const MarketState& s, std::span<double> pi) {
        base(t, s, pi);
        if (t >= t0 && t < t0 + h - 1e-12) pi[i] += delta;
    };
}

inline ProfileFn zero_profile() {
    return [](double, const MarketState&, std::span<double> pi) {
        for (auto& v : pi) v = 0.0;
    };
}

struct ObjectiveConfig {
    std::size_t paths = 20000;
    std::size_t n_steps = 2000;  // over [t, T]
    std::size_t batches = 20;
    std::uint64_t seed = 11;
};

struct ObjectiveEstimate {
    double mean_term = 0;
    double var_term = 0;
    double J = 0;
    double se_mean = 0;
    double se_var = 0;
    double se_J = 0;
    std::size_t paths = 0;
};

// Accumulators for X_i - lM_i Xbar and X_i - lV_i Xbar, per profile, batch, investor.
struct ObjectiveRun {
    std::size_t n_profiles = 0, N = 0, B = 0;
    std::vector<Accumulator> hm, hv;
    std::vector<double> gamma;

    std::size_t at(std::size_t prof, std::size_t b, std::size_t i) const { return (prof * B + b) * N + i; }
    double batch_J(std::size_t prof, std::size_t b, std::size_t i) const {
        return hm[at(prof, b, i)].mean() - 0.5 * gamma[i] * hv[at(prof, b, i)].variance();
    }

    ObjectiveEstimate estimate(std::size_t prof, std::size_t i) const {
        Accumulator m, v, jb, mb, vb;
        for (std::size_t b = 0; b < B; ++b) {
            m.merge(hm[at(prof, b, i)]);
            v.merge(hv[at(prof, b, i)]);
            jb.add(batch_J(prof, b, i));
            mb.add(hm[at(prof, b, i)].mean());
            vb.add(hv[at(prof, b, i)].variance());
        }
        ObjectiveEstimate e;
        e.mean_term = m.mean();
        e.var_term = v.variance();
        e.J = e.mean_term - 0.5 * gamma[i] * e.var_term;
        e.se_mean = mb.se();
        e.se_var = vb.se();
        e.se_J = jb.se();
        e.paths = m.n;
        return e;
    }

    // J(a) - J(b) with its batch-means SE; profiles share every random number.
    Estimate difference(std::size_t a, std::size_t b, std::size_t i) const {
        Accumulator d;
        for (std::size_t k = 0; k < B; ++k) d.add(batch_J(a, k, i) - batch_J(b, k, i));
        return {estimate(a, i).J - estimate(b, i).J, d.se()};
    }
};

// Simulates all wealth equations from (t, x, state) for each profile on the
// same noise. The information structure follows the state tag: none = constant
// mu known, regime = chain observed, posterior = filter under the observation
// measure driven by the innovations.
inline ObjectiveRun run_objective(const std::vector<ProfileFn>& profiles, double t, std::span<const double> x,
                                  const MarketState& s, const Model& model, const ObjectiveConfig& cfg) {
    const auto& m = model.market();
    const std::size_t N = model.N(), P = profiles.size(), B = cfg.batches;
    if (x.size() != N) throw std::invalid_argument("estimate_objective: wealth vector has wrong size");
    if (B < 2 || cfg.paths < B) throw std::invalid_argument("estimate_objective: need >= 2 batches and paths >= batches");
    if (s.tag == MarketState::Tag::Regime && !m.alternating())
        throw std::invalid_argument("estimate_objective: regime state needs alternating mode");
    const TimeGrid grid(t, m.T, cfg.n_steps);
    const double dt = grid.dt(), sq = std::sqrt(dt), growth = std::exp(m.r * dt);
    ObjectiveRun run;
    run.n_profiles = P;
    run.N = N;
    run.B = B;
    run.hm.resize(P * B * N);
    run.hv.resize(P * B * N);
    for (const auto& inv : model.investors()) run.gamma.push_back(inv.gamma);

    parallel_for(B, [&](std::size_t b) {
        const std::size_t lo = b * cfg.paths / B, hi = (b + 1) * cfg.paths / B;
        std::vector<double> dw(grid.n_steps), excess(grid.n_steps), X(N), pi(N);
        std::vector<MarketState> states(grid.n_steps);
        std::size_t clamps = 0;
        for (std::size_t path = lo; path < hi; ++path) {
            Stream rng(cfg.seed, Purpose::Objective, path);
            for (auto& w : dw) w = sq * rng.normal();
            if (s.tag == MarketState::Tag::Posterior) {
                double p = std::clamp(s.p, kClampEps, 1.0 - kClampEps);
                for (std::size_t k = 0; k < grid.n_steps; ++k) {
                    states[k] = MarketState::posterior(p);
                    excess[k] = (m.theta(p) - m.r) * dt + m.sigma * dw[k];
                    p = posterior_step(m, p, dt, dw[k], Measure::P, clamps);
                }
            } else if (s.tag == MarketState::Tag::Regime) {
                Stream crng(cfg.seed, Purpose::ObjectiveChain, path);
                auto chain = simulate_chain(grid, m.q1, m.q2, s.m, crng);
                for (std::size_t k = 0; k < grid.n_steps; ++k) {
                    states[k] = MarketState::regime(chain.state[k]);
                    excess[k] = (m.mu(chain.state[k]) - m.r) * dt + m.sigma * dw[k];
                }
            } else {
                const double mu = m.mu(m.state);
                for (std::size_t k = 0; k < grid.n_steps; ++k) {
                    states[k] = MarketState::none();
                    excess[k] = (mu - m.r) * dt + m.sigma * dw[k];
                }
            }
            for (std::size_t a = 0; a < P; ++a) {
                std::copy(x.begin(), x.end(), X.begin());
                for (std::size_t k = 0; k < grid.n_steps; ++k) {
                    profiles[a](grid.time(k), states[k], pi);
                    for (std::size_t i = 0; i < N; ++i) X[i] = wealth_step(X[i], pi[i], growth, excess[k]);
                }
                double xbar = 0;
                for (double v : X) xbar += v;
                xbar /= static_cast<double>(N);
                if (!std::isfinite(xbar)) throw NumericalError("estimate_objective: wealth path exploded");
                for (std::size_t i = 0; i < N; ++i) {
                    const auto& inv = model.investors()[i];
                    run.hm[run.at(a, b, i)].add(X[i] - inv.lambda_m * xbar);
                    run.hv[run.at(a, b, i)].add(X[i] - inv.lambda_v * xbar);
                }
            }
        }
    });
    return run;
}

inline ObjectiveEstimate estimate_objective(const ProfileFn& profile, std::size_t i, double t,
                                            std::span<const double> x, const MarketState& s, const Model& model,
                                            const ObjectiveConfig& cfg) {
    if (i >= model.N()) throw std::invalid_argument("estimate_objective: investor index out of range");
    return run_objective({profile}, t, x, s, model, cfg).estimate(0, i);
}

struct IntraEntry {
    double h = 0;
    double delta = 0;
    double dJ = 0;
    double se = 0;
    double ratio = 0;  // dJ / h
    bool improves = false;
};

struct IntraReport {
    std::vector<IntraEntry> entries;
    bool pass = true;
    ObjectiveEstimate base;
};

// Constant offsets delta on [t, t+h] for investor i, others unchanged.
// Fails if some perturbation improves J_i by more than 2 joint SEs.
inline IntraReport intra_equilibrium_test(std::size_t i, const ProfileFn& base, double t, std::span<const double> x,
                                          const MarketState& s, const std::vector<double>& hs,
                                          const std::vector<double>& deltas, const Model& model,
                                          const ObjectiveConfig& cfg) {
    std::vector<ProfileFn> profiles{base};
    for (double h : hs) {
        if (!(h > 0)) throw std::invalid_argument("intra_equilibrium_test: h must be > 0");
        for (double d : deltas) profiles.push_back(perturbed_profile(base, i, t, h, d));
    }
    auto run = run_objective(profiles, t, x, s, model, cfg);
    IntraReport rep;
    rep.base = run.estimate(0, i);
    std::size_t a = 1;
    for (double h : hs)
        for (double d : deltas) {
            auto diff = run.difference(a++, 0, i);
            IntraEntry e{h, d, diff.value, diff.se, diff.value / h, false};
            e.improves = d != 0.0 && diff.value > 2.0 * diff.se;
            if (e.improves) rep.pass = false;
            rep.entries.push_back(e);
        }
    return rep;
}

}  // namespace mvg

#endif
