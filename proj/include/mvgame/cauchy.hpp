#ifndef MVGAME_CAUCHY_HPP
#define MVGAME_CAUCHY_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "core_model.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "stochastic_engine.hpp"

namespace mvg {

struct McConfig {
    std::size_t paths_c = 10000;
    std::size_t paths_dc = 20000;
    double dt = 0.005;  // inner Euler step (upper bound)
    std::uint64_t seed = 20240607;
};

inline constexpr std::size_t kBlock = 256;

// ---------------------------------------------------------------------------
// Monte Carlo kernel for the first problem.
//
// Runs Q-measure paths from p0 and records, at each checkpoint tau_j, the
// running integrals  Ic = int mpr(P)^2 du  and  Iz = int zeta (theta(P)-r) du.
// With kappa = 1 these give c and (up to 2(mu1-mu2)/sigma^2) dc/dp for every
// horizon from one set of paths.

struct QRunOptions {
    bool zeta = false;
    // Integrands stop accumulating once P leaves (stop_lo, stop_hi).
    double stop_lo = -1.0;
    double stop_hi = 2.0;
    std::size_t path_offset = 0;
};

struct QRun {
    std::vector<double> tau;
    std::vector<Accumulator> ic;
    std::vector<Accumulator> iz;
    std::size_t clamps = 0;
    std::size_t steps = 0;
};

inline std::vector<std::size_t> segment_steps(const std::vector<double>& taus, double dt_max) {
    std::vector<std::size_t> ns;
    double prev = 0;
    for (double tau : taus) {
        double len = tau - prev;
        if (!(len > 0)) throw std::invalid_argument("checkpoints must be strictly increasing and positive");
        ns.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / dt_max - 1e-9))));
        prev = tau;
    }
    return ns;
}

inline QRun q_functionals(const MarketParams& m, double p0, const std::vector<double>& taus, double dt_max,
                          std::size_t n_paths, std::uint64_t seed, Purpose purpose, const QRunOptions& opt = {}) {
    if (!(p0 > 0 && p0 < 1)) throw std::invalid_argument("q_functionals: p must lie in (0,1)");
    if (!(dt_max > 0)) throw std::invalid_argument("q_functionals: dt must be > 0");
    const auto ns = segment_steps(taus, dt_max);
    const std::size_t nc = taus.size();
    const std::size_t nb = (n_paths + kBlock - 1) / kBlock;
    struct Part {
        std::vector<Accumulator> ic, iz;
        std::size_t clamps = 0, steps = 0;
    };
    std::vector<Part> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        Part& part = parts[b];
        part.ic.resize(nc);
        part.iz.resize(nc);
        std::size_t lo = b * kBlock, hi = std::min(n_paths, lo + kBlock);
        for (std::size_t path = lo; path < hi; ++path) {
            Stream rng(seed, purpose, opt.path_offset + path);
            double p = p0, z = 1.0, ic = 0.0, iz = 0.0, prev = 0.0;
            bool alive = true;
            for (std::size_t s = 0; s < nc; ++s) {
                const double dt = (taus[s] - prev) / static_cast<double>(ns[s]);
                const double sq = std::sqrt(dt);
                for (std::size_t k = 0; k < ns[s]; ++k) {
                    const double dw = sq * rng.normal();
                    if (alive) {
                        const double a = m.mpr(p);
                        ic += a * a * dt;
                        if (opt.zeta) iz += z * (m.theta(p) - m.r) * dt;
                    }
                    // Euler step of the tangent: the derivative of the posterior step below.
                    if (opt.zeta) z *= 1.0 + m.Gamma(p) * dt + m.Lambda(p) * dw;
                    p = posterior_step(m, p, dt, dw, Measure::Q, part.clamps);
                    if (p <= opt.stop_lo || p >= opt.stop_hi) alive = false;
                }
                part.steps += ns[s];
                prev = taus[s];
                if (!std::isfinite(ic) || !std::isfinite(iz))
                    throw NumericalError("q_functionals: non-finite accumulation at p0=" + num(p0));
                part.ic[s].add(ic);
                part.iz[s].add(iz);
            }
        }
    });
    QRun out;
    out.tau = taus;
    out.ic.resize(nc);
    out.iz.resize(nc);
    for (const auto& part : parts) {
        for (std::size_t s = 0; s < nc; ++s) {
            out.ic[s].merge(part.ic[s]);
            out.iz[s].merge(part.iz[s]);
        }
        out.clamps += part.clamps;
        out.steps += part.steps;
    }
    return out;
}

inline double dc_prefactor(const MarketParams& m) { return 2.0 * (m.mu1 - m.mu2) / (m.sigma * m.sigma); }

inline void check_node(const Model& model, double t, double p, std::size_t i, const char* who) {
    if (!(t >= 0 && t <= model.T())) throw std::invalid_argument(std::string(who) + ": t outside [0,T]");
    if (!(p > 0 && p < 1)) throw std::invalid_argument(std::string(who) + ": p outside (0,1)");
    if (i >= model.N()) throw std::invalid_argument(std::string(who) + ": investor index out of range");
}

inline Estimate estimate_c(double t, double p, std::size_t i, const Model& model, const McConfig& mc) {
    check_node(model, t, p, i, "estimate_c");
    const double tau = model.T() - t;
    if (tau <= 0) return {0.0, 0.0};
    auto run = q_functionals(model.market(), p, {tau}, mc.dt, mc.paths_c, mc.seed, Purpose::InnerC);
    const double k = model.coef().kappa[i];
    return {k * run.ic[0].mean(), k * run.ic[0].se()};
}

inline Estimate estimate_dc_dp(double t, double p, std::size_t i, const Model& model, const McConfig& mc) {
    check_node(model, t, p, i, "estimate_dc_dp");
    const auto& m = model.market();
    const double tau = model.T() - t;
    if (tau <= 0 || m.mu1 == m.mu2) return {0.0, 0.0};
    QRunOptions opt;
    opt.zeta = true;
    auto run = q_functionals(m, p, {tau}, mc.dt, mc.paths_dc, mc.seed, Purpose::InnerDc, opt);
    const double f = model.coef().kappa[i] * dc_prefactor(m);
    return {f * run.iz[0].mean(), std::abs(f) * run.iz[0].se()};
}

// Central difference (c(p+h) - c(p-h)) / 2h with common random numbers, using
// the same streams as estimate_c. The SE comes from per-path differences.
inline Estimate crn_difference_dc_dp(double t, double p, double h, std::size_t i, const Model& model,
                                     const McConfig& mc) {
    check_node(model, t, p, i, "crn_difference_dc_dp");
    if (!(p - h > 0 && p + h < 1)) throw std::invalid_argument("crn_difference_dc_dp: p +- h outside (0,1)");
    const auto& m = model.market();
    const double tau = model.T() - t;
    if (tau <= 0) return {0.0, 0.0};
    const auto ns = segment_steps({tau}, mc.dt)[0];
    const double dt = tau / static_cast<double>(ns), sq = std::sqrt(dt);
    const std::size_t nb = (mc.paths_c + kBlock - 1) / kBlock;
    std::vector<Accumulator> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        std::size_t lo = b * kBlock, hi = std::min(mc.paths_c, lo + kBlock), cl = 0;
        for (std::size_t path = lo; path < hi; ++path) {
            Stream rng(mc.seed, Purpose::InnerC, path);
            double pu = p + h, pd = p - h, iu = 0, id = 0;
            for (std::size_t k = 0; k < ns; ++k) {
                const double dw = sq * rng.normal();
                const double au = m.mpr(pu), ad = m.mpr(pd);
                iu += au * au * dt;
                id += ad * ad * dt;
                pu = posterior_step(m, pu, dt, dw, Measure::Q, cl);
                pd = posterior_step(m, pd, dt, dw, Measure::Q, cl);
            }
            parts[b].add((iu - id) / (2.0 * h));
        }
    });
    Accumulator acc;
    for (const auto& a : parts) acc.merge(a);
    const double k = model.coef().kappa[i];
    return {k * acc.mean(), k * acc.se()};
}

// c under the problem stopped at exit from (1/n, 1-1/n).
inline Estimate estimate_c_stopped(double t, double p, std::size_t i, int n, const Model& model, const McConfig& mc) {
    check_node(model, t, p, i, "estimate_c_stopped");
    const double tau = model.T() - t;
    if (tau <= 0) return {0.0, 0.0};
    QRunOptions opt;
    opt.stop_lo = 1.0 / n;
    opt.stop_hi = 1.0 - 1.0 / n;
    auto run = q_functionals(model.market(), p, {tau}, mc.dt, mc.paths_c, mc.seed, Purpose::InnerC, opt);
    const double k = model.coef().kappa[i];
    return {k * run.ic[0].mean(), k * run.ic[0].se()};
}

// Upper bound on c_i from theta(p) in [mu2, mu1].
inline double c_bound(const Model& model, std::size_t i, double t) {
    const auto& m = model.market();
    const double a = std::max(std::pow(m.mu1 - m.r, 2), std::pow(m.mu2 - m.r, 2)) / (m.sigma * m.sigma);
    return (model.T() - t) * model.coef().kappa[i] * a;
}

// ---------------------------------------------------------------------------
// Source term of the second problem.

enum class SourceVariant { Ansatz, PaperPrinted, PaperMarkovSign };

inline const char* to_string(SourceVariant v) {
    switch (v) {
        case SourceVariant::Ansatz: return "ansatz";
        case SourceVariant::PaperPrinted: return "paper-printed";
        case SourceVariant::PaperMarkovSign: return "paper-markov-sign";
    }
    return "?";
}

inline SourceVariant parse_variant(const std::string& s) {
    if (s == "ansatz") return SourceVariant::Ansatz;
    if (s == "paper-printed") return SourceVariant::PaperPrinted;
    if (s == "paper-markov-sign") return SourceVariant::PaperMarkovSign;
    throw ConfigError("unknown source variant '" + s + "'");
}

// R_i given theta(p), beta(p), dc_i and the cross-sectional mean of dc.
inline double source_term(const Model& model, std::size_t i, double theta, double beta, double dc_i, double dc_bar,
                          SourceVariant v) {
    const auto& m = model.market();
    const auto& c = model.coef();
    const auto& inv = model.investors()[i];
    const double s2 = m.sigma * m.sigma, ex = theta - m.r;
    const double si = c.kappa[i] * ex / s2 - beta / m.sigma * dc_i;
    const double sb = c.kappa_bar * ex / s2 - beta / m.sigma * dc_bar;
    const double sgn = v == SourceVariant::PaperMarkovSign ? -1.0 : 1.0;
    const double mean = ex * (si + sgn * (inv.lambda_v - inv.lambda_m) / (1.0 - c.lambda_v_bar) * sb);
    double br = si;
    if (v != SourceVariant::Ansatz) {
        const double n = static_cast<double>(c.N);
        br = 2.0 * inv.lambda_v / (1.0 - c.lambda_v_bar) * (1.0 - inv.lambda_v / n) * sb +
             (1.0 - 2.0 * inv.lambda_v / n) * si;
    }
    const double var = s2 * br * br + beta * beta * dc_i * dc_i + 2.0 * m.sigma * beta * dc_i * si;
    return mean - 0.5 * inv.gamma * var;
}

// Constant-mu full-information rate: C_i(t) = (T - t) N_i.
inline double N_const(const Model& model, std::size_t i, double mu, SourceVariant v) {
    return source_term(model, i, mu, 0.0, 0.0, 0.0, v);
}

// ---------------------------------------------------------------------------
// Regime-switching closed forms.

namespace detail {
inline double two_state_integral(const MarketParams& m, double tau, int state, double v1, double v2) {
    const double q = m.q1 + m.q2, e = 1.0 - std::exp(-q * tau);
    const double lin = (m.q2 * v1 + m.q1 * v2) / q * tau;
    return state == 1 ? lin + m.q1 / (q * q) * (v1 - v2) * e : lin - m.q2 / (q * q) * (v1 - v2) * e;
}
}  // namespace detail

inline double closed_form_c_markov(double t, int state, std::size_t i, const Model& model) {
    const auto& m = model.market();
    if (!m.alternating()) throw std::invalid_argument("closed_form_c_markov: requires alternating mode");
    const double k = model.coef().kappa[i];
    const double a1 = m.mpr(1.0), a2 = m.mpr(0.0);
    return detail::two_state_integral(m, model.T() - t, state, k * a1 * a1, k * a2 * a2);
}

inline double Q_markov(const Model& model, std::size_t i, int state, SourceVariant v) {
    return source_term(model, i, model.market().mu(state), 0.0, 0.0, 0.0, v);
}

inline double closed_form_C_markov(double t, int state, std::size_t i, const Model& model, SourceVariant v) {
    const auto& m = model.market();
    if (!m.alternating()) throw std::invalid_argument("closed_form_C_markov: requires alternating mode");
    return detail::two_state_integral(m, model.T() - t, state, Q_markov(model, i, 1, v), Q_markov(model, i, 2, v));
}

// E[ int_t^T v_{M(u)} du | M(t) = state ] by exact chain simulation
// (occupation times, no time grid).
inline Estimate markov_occupation_mc(double t, int state, double v1, double v2, const MarketParams& m,
                                     std::size_t n_paths, std::uint64_t seed) {
    const double T = m.T;
    const std::size_t nb = (n_paths + kBlock - 1) / kBlock;
    std::vector<Accumulator> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        std::size_t lo = b * kBlock, hi = std::min(n_paths, lo + kBlock);
        for (std::size_t path = lo; path < hi; ++path) {
            Stream rng(seed, Purpose::Chain, path, static_cast<std::uint64_t>(state));
            double u = t, acc = 0;
            int s = state;
            while (u < T) {
                double hold = rng.exponential(s == 1 ? m.q1 : m.q2);
                double end = std::min(T, u + hold);
                acc += (s == 1 ? v1 : v2) * (end - u);
                u = end;
                s = 3 - s;
            }
            parts[b].add(acc);
        }
    });
    Accumulator a;
    for (const auto& p : parts) a.merge(p);
    return a.estimate();
}

// ---------------------------------------------------------------------------
// Finite differences for  v_t + A(p) v_p + D(p) v_pp + f(t,p) = 0,  v(T) = 0.
//
// Nested domain [1/n, 1-1/n] with zero Dirichlet data, or the full closed
// interval [0,1] where D vanishes at both ends and the end rows use one-sided
// drift differences. Crank-Nicolson in time; central differences in space,
// falling back to upwind where the cell Peclet number exceeds 2.

struct FdGrid {
    std::size_t space_nodes = 512;
    std::size_t time_steps = 2048;
};

// n >= 2 selects the nested domain; n == 0 the full interval.
struct FdDomain {
    int n = 0;
    bool full() const { return n == 0; }
};

struct FdSolution {
    std::vector<double> p;
    std::vector<double> t;
    std::vector<double> v;  // v[k * p.size() + j]
    bool dirichlet = false;

    double at(std::size_t k, std::size_t j) const { return v[k * p.size() + j]; }

    // Linear in p. Outside a nested domain the solution is extended by 0.
    double interp(std::size_t k, double x) const {
        const std::size_t np = p.size();
        if (x <= p.front()) return dirichlet && x < p.front() ? 0.0 : at(k, 0);
        if (x >= p.back()) return dirichlet && x > p.back() ? 0.0 : at(k, np - 1);
        const double h = (p.back() - p.front()) / static_cast<double>(np - 1);
        std::size_t j = std::min(np - 2, static_cast<std::size_t>((x - p.front()) / h));
        const double w = (x - p[j]) / (p[j + 1] - p[j]);
        return (1 - w) * at(k, j) + w * at(k, j + 1);
    }
};

namespace detail {

struct Tridiag {
    std::vector<double> lo, di, up;
    explicit Tridiag(std::size_t n) : lo(n, 0.0), di(n, 0.0), up(n, 0.0) {}
};

inline void thomas(const Tridiag& A, std::vector<double>& rhs, std::vector<double>& work) {
    const std::size_t n = rhs.size();
    work.resize(n);
    double b = A.di[0];
    rhs[0] /= b;
    for (std::size_t j = 1; j < n; ++j) {
        work[j] = A.up[j - 1] / b;
        b = A.di[j] - A.lo[j] * work[j];
        rhs[j] = (rhs[j] - A.lo[j] * rhs[j - 1]) / b;
    }
    for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= work[j + 1] * rhs[j + 1];
}

}  // namespace detail

// t_out must be increasing and end at T; returns v at every t_out.
template <class Drift, class Diff, class Source, class Check>
FdSolution solve_backward_fd(const MarketParams& m, const FdDomain& dom, const FdGrid& g,
                             const std::vector<double>& t_out, Drift drift, Diff diff, Source src, Check check) {
    if (t_out.size() < 2 || t_out.back() != m.T) throw std::invalid_argument("solve_backward_fd: bad output grid");
    if (g.space_nodes < 3 || g.time_steps < 1) throw std::invalid_argument("solve_backward_fd: grid too small");
    if (!dom.full() && dom.n < 2) throw std::invalid_argument("solve_backward_fd: domain index must be >= 2");
    FdSolution sol;
    sol.t = t_out;
    sol.dirichlet = !dom.full();
    const std::size_t M = g.space_nodes;
    double h;
    std::size_t off = 0;  // unknowns start at sol.p[off]
    if (dom.full()) {
        h = 1.0 / static_cast<double>(M - 1);
        for (std::size_t j = 0; j < M; ++j) sol.p.push_back(static_cast<double>(j) * h);
    } else {
        const double a = 1.0 / dom.n, b = 1.0 - 1.0 / dom.n;
        h = (b - a) / static_cast<double>(M + 1);
        for (std::size_t j = 0; j < M + 2; ++j) sol.p.push_back(j == M + 1 ? b : a + static_cast<double>(j) * h);
        off = 1;
    }
    const std::size_t np = sol.p.size(), nt = t_out.size();
    sol.v.assign(nt * np, 0.0);
    if (!dom.full() && dom.n == 2) return sol;

    // L v = lo v[j-1] + di v[j] + up v[j+1]
    detail::Tridiag L(M);
    for (std::size_t j = 0; j < M; ++j) {
        const double x = sol.p[j + off];
        const double A = drift(x), D = diff(x);
        const bool edge_lo = dom.full() && j == 0, edge_hi = dom.full() && j == M - 1;
        if (edge_lo || edge_hi) {
            if (edge_lo && A > 0) {
                L.di[j] = -A / h;
                L.up[j] = A / h;
            }
            if (edge_hi && A < 0) {
                L.di[j] = A / h;
                L.lo[j] = -A / h;
            }
            continue;
        }
        if (std::abs(A) * h <= 2.0 * D) {
            L.lo[j] = D / (h * h) - A / (2 * h);
            L.up[j] = D / (h * h) + A / (2 * h);
            L.di[j] = -2.0 * D / (h * h);
        } else if (A > 0) {
            L.lo[j] = D / (h * h);
            L.up[j] = D / (h * h) + A / h;
            L.di[j] = -2.0 * D / (h * h) - A / h;
        } else {
            L.lo[j] = D / (h * h) - A / h;
            L.up[j] = D / (h * h);
            L.di[j] = -2.0 * D / (h * h) + A / h;
        }
    }

    std::vector<double> v(M, 0.0), rhs(M), f_old(M), f_new(M), work;
    detail::Tridiag lhs(M);
    double cached_dt = -1;
    for (std::size_t k = nt - 1; k-- > 0;) {
        const double span_t = t_out[k + 1] - t_out[k];
        const std::size_t ns =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(g.time_steps * span_t / m.T - 1e-9)));
        const double dt = span_t / static_cast<double>(ns);
        if (dt != cached_dt) {
            for (std::size_t j = 0; j < M; ++j) {
                lhs.lo[j] = -0.5 * dt * L.lo[j];
                lhs.up[j] = -0.5 * dt * L.up[j];
                lhs.di[j] = 1.0 - 0.5 * dt * L.di[j];
            }
            cached_dt = dt;
        }
        for (std::size_t s = 0; s < ns; ++s) {
            const double t_hi = t_out[k + 1] - static_cast<double>(s) * dt;
            const double t_lo = s + 1 == ns ? t_out[k] : t_hi - dt;
            for (std::size_t j = 0; j < M; ++j) {
                f_old[j] = src(t_hi, sol.p[j + off]);
                f_new[j] = src(t_lo, sol.p[j + off]);
            }
            for (std::size_t j = 0; j < M; ++j) {
                double Lv = L.di[j] * v[j];
                if (j > 0) Lv += L.lo[j] * v[j - 1];
                if (j + 1 < M) Lv += L.up[j] * v[j + 1];
                rhs[j] = v[j] + 0.5 * dt * Lv + 0.5 * dt * (f_old[j] + f_new[j]);
            }
            detail::thomas(lhs, rhs, work);
            v.swap(rhs);
        }
        for (std::size_t j = 0; j < M; ++j) {
            if (!std::isfinite(v[j])) throw NumericalError("solve_backward_fd: non-finite value");
            check(t_out[k], sol.p[j + off], v[j]);
            sol.v[k * np + j + off] = v[j];
        }
    }
    return sol;
}

inline std::vector<double> uniform_times(double T, std::size_t n_t) {
    if (n_t < 2) throw std::invalid_argument("time grid needs at least 2 nodes");
    std::vector<double> t(n_t);
    for (std::size_t k = 0; k < n_t; ++k) t[k] = k + 1 == n_t ? T : T * static_cast<double>(k) / (n_t - 1);
    return t;
}

// First problem for investor i on domain n (or the full interval).
inline FdSolution solve_cauchy_fd(std::size_t i, const Model& model, const FdDomain& dom, const FdGrid& g,
                                  const std::vector<double>& t_out) {
    const auto& m = model.market();
    const double k = model.coef().kappa[i];
    auto check = [&](double t, double p, double v) {
        const double bound = c_bound(model, i, t);
        if (v > 1.1 * bound + 1e-12 || v < -0.1 * bound - 1e-12)
            throw NumericalError("solve_cauchy_fd: value " + num(v) + " violates the analytic bound " + num(bound) +
                                 " at t=" + num(t) + ", p=" + num(p));
    };
    return solve_backward_fd(
        m, dom, g, t_out, [&](double p) { return m.q_drift(p); },
        [&](double p) { return 0.5 * m.beta(p) * m.beta(p); },
        [&](double, double p) {
            const double a = m.mpr(p);
            return k * a * a;
        },
        check);
}

// ---------------------------------------------------------------------------
// Table of c, dc/dp and C on a (t, p) grid with bilinear interpolation.

enum class Provenance { MC, FD };

inline const char* to_string(Provenance p) { return p == Provenance::MC ? "MC" : "FD"; }

struct TableGrid {
    std::size_t n_t = 64;
    std::size_t n_p = 41;
    double p_min = 0.01;
    double p_max = 0.99;

    void validate() const {
        if (n_t < 2 || n_p < 2) throw ConfigError("tables: need at least 2 nodes per axis");
        if (!(p_min >= 0.01 && p_max <= 0.99 && p_min < p_max))
            throw ConfigError("tables: p-range must lie within [0.01, 0.99]");
    }
};

class CauchyTable {
public:
    CauchyTable() = default;
    CauchyTable(double T, std::size_t N, const TableGrid& g) : N_(N), grid_(g) {
        g.validate();
        t_ = uniform_times(T, g.n_t);
        for (std::size_t j = 0; j < g.n_p; ++j)
            p_.push_back(j + 1 == g.n_p ? g.p_max
                                        : g.p_min + (g.p_max - g.p_min) * static_cast<double>(j) / (g.n_p - 1));
        const std::size_t sz = N * g.n_t * g.n_p;
        for (auto* f : {&c, &dc, &C, &se_c, &se_dc, &se_C}) f->assign(sz, 0.0);
    }

    std::vector<double> c, dc, C, se_c, se_dc, se_C;
    Provenance provenance = Provenance::MC;
    SourceVariant variant = SourceVariant::Ansatz;
    std::string params_hash;
    McConfig mc;

    const std::vector<double>& t() const { return t_; }
    const std::vector<double>& p() const { return p_; }
    std::size_t N() const { return N_; }
    const TableGrid& grid() const { return grid_; }
    std::size_t idx(std::size_t i, std::size_t k, std::size_t j) const { return (i * t_.size() + k) * p_.size() + j; }

    struct Cell {
        std::size_t k, j;
        double wt, wp;
    };

    Cell locate(double t, double p, bool count = true) const {
        if (p < p_.front() || p > p_.back()) {
            if (count && clamps_->fetch_add(1) == 0)
                spdlog::warn("table query p={} outside [{}, {}], clamped to the nearest edge", p, p_.front(),
                             p_.back());
            p = std::clamp(p, p_.front(), p_.back());
        }
        t = std::clamp(t, t_.front(), t_.back());
        const std::size_t nt = t_.size(), np = p_.size();
        const double ht = t_.back() / static_cast<double>(nt - 1);
        const double hp = (p_.back() - p_.front()) / static_cast<double>(np - 1);
        std::size_t k = std::min(nt - 2, static_cast<std::size_t>(t / ht));
        std::size_t j = std::min(np - 2, static_cast<std::size_t>((p - p_.front()) / hp));
        // Exact node hits return stored values.
        double wt = (t - t_[k]) / (t_[k + 1] - t_[k]);
        double wp = (p - p_[j]) / (p_[j + 1] - p_[j]);
        return {k, j, std::clamp(wt, 0.0, 1.0), std::clamp(wp, 0.0, 1.0)};
    }

    double interp(const std::vector<double>& f, std::size_t i, const Cell& c) const {
        const double* a = &f[idx(i, c.k, c.j)];
        const double* b = &f[idx(i, c.k + 1, c.j)];
        const double lo = c.wp == 0.0 ? a[0] : (1 - c.wp) * a[0] + c.wp * a[1];
        const double hi = c.wp == 0.0 ? b[0] : (1 - c.wp) * b[0] + c.wp * b[1];
        return c.wt == 0.0 ? lo : (c.wt == 1.0 ? hi : (1 - c.wt) * lo + c.wt * hi);
    }

    double c_at(std::size_t i, double t, double p) const { return interp(c, i, locate(t, p)); }
    double dc_at(std::size_t i, double t, double p) const { return interp(dc, i, locate(t, p)); }
    double C_at(std::size_t i, double t, double p) const { return interp(C, i, locate(t, p)); }

    void dc_all(double t, double p, std::span<double> out, bool count = true) const {
        const Cell cell = locate(t, p, count);
        for (std::size_t i = 0; i < N_; ++i) out[i] = interp(dc, i, cell);
    }

    std::size_t clamp_count() const { return clamps_->load(); }
    void reset_clamps() const { clamps_->store(0); }

private:
    std::vector<double> t_, p_;
    std::size_t N_ = 0;
    TableGrid grid_;
    std::shared_ptr<std::atomic<std::size_t>> clamps_ = std::make_shared<std::atomic<std::size_t>>(0);
};

// ---------------------------------------------------------------------------
// Second problem.

// FD solve for C_i with drift eta and source R_i; dc from the table (edge-clamped).
inline FdSolution solve_second_cauchy_fd(std::size_t i, const Model& model, const CauchyTable& table,
                                         SourceVariant v, const FdDomain& dom, const FdGrid& g,
                                         const std::vector<double>& t_out) {
    if (table.dc.empty() || table.N() != model.N())
        throw std::invalid_argument("solve_second_cauchy: dc/dp tables missing for some investors");
    const auto& m = model.market();
    const std::size_t N = model.N();
    std::vector<double> buf(N);
    auto src = [&](double t, double p) {
        table.dc_all(t, p, buf, false);
        double bar = 0;
        for (double d : buf) bar += d;
        bar /= static_cast<double>(N);
        return source_term(model, i, m.theta(p), m.beta(p), buf[i], bar, v);
    };
    return solve_backward_fd(
        m, dom, g, t_out, [&](double p) { return m.eta(p); }, [&](double p) { return 0.5 * m.beta(p) * m.beta(p); },
        src, [](double, double, double) {});
}

// MC of C_i along P-measure filter paths.
inline Estimate estimate_C(double t, double p, std::size_t i, const Model& model, const CauchyTable& table,
                           SourceVariant v, const McConfig& mc) {
    check_node(model, t, p, i, "estimate_C");
    if (table.N() != model.N()) throw std::invalid_argument("estimate_C: dc/dp tables missing for some investors");
    const auto& m = model.market();
    const double tau = model.T() - t;
    if (tau <= 0) return {0.0, 0.0};
    const std::size_t ns = segment_steps({tau}, mc.dt)[0];
    const double dt = tau / static_cast<double>(ns), sq = std::sqrt(dt);
    const std::size_t N = model.N(), nb = (mc.paths_c + kBlock - 1) / kBlock;
    std::vector<Accumulator> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        std::vector<double> buf(N);
        std::size_t lo = b * kBlock, hi = std::min(mc.paths_c, lo + kBlock), cl = 0;
        for (std::size_t path = lo; path < hi; ++path) {
            Stream rng(mc.seed, Purpose::InnerC2, path);
            double x = p, acc = 0;
            for (std::size_t k = 0; k < ns; ++k) {
                const double u = t + static_cast<double>(k) * dt;
                table.dc_all(u, x, buf, false);
                double bar = 0;
                for (double d : buf) bar += d;
                bar /= static_cast<double>(N);
                acc += source_term(model, i, m.theta(x), m.beta(x), buf[i], bar, v) * dt;
                x = posterior_step(m, x, dt, sq * rng.normal(), Measure::P, cl);
            }
            parts[b].add(acc);
        }
    });
    Accumulator a;
    for (const auto& s : parts) a.merge(s);
    return a.estimate();
}

enum class SecondMethod { MC, FD };

// C_i at every table node.
inline std::vector<Estimate> solve_second_cauchy(std::size_t i, const Model& model, const CauchyTable& table,
                                                 SecondMethod method, SourceVariant v, const McConfig& mc,
                                                 const FdGrid& g = {}) {
    const auto& tg = table.t();
    const auto& pg = table.p();
    std::vector<Estimate> out(tg.size() * pg.size());
    if (method == SecondMethod::FD) {
        auto sol = solve_second_cauchy_fd(i, model, table, v, FdDomain{0}, g, tg);
        for (std::size_t k = 0; k < tg.size(); ++k)
            for (std::size_t j = 0; j < pg.size(); ++j) out[k * pg.size() + j] = {sol.interp(k, pg[j]), 0.0};
    } else {
        for (std::size_t k = 0; k < tg.size(); ++k)
            for (std::size_t j = 0; j < pg.size(); ++j) out[k * pg.size() + j] = estimate_C(tg[k], pg[j], i, model, table, v, mc);
    }
    return out;
}

// MC tables for c and dc/dp, then C by FD on the full interval.
inline CauchyTable build_tables(const Model& model, const TableGrid& grid, const McConfig& mc,
                                const FdGrid& fd = {}, SourceVariant v = SourceVariant::Ansatz) {
    grid.validate();
    const auto& m = model.market();
    const std::size_t N = model.N();
    CauchyTable tab(model.T(), N, grid);
    tab.provenance = Provenance::MC;
    tab.variant = v;
    tab.mc = mc;
    const auto& tg = tab.t();
    const std::size_t nt = tg.size();
    std::vector<double> taus;
    for (std::size_t k = nt - 1; k-- > 0;) taus.push_back(model.T() - tg[k]);
    const bool degenerate = m.mu1 == m.mu2;
    const double pref = dc_prefactor(m);
    QRunOptions opt;
    opt.zeta = !degenerate;
    const std::size_t paths = std::max(mc.paths_c, mc.paths_dc);
    for (std::size_t j = 0; j < tab.p().size(); ++j) {
        QRun run;
        try {
            run = q_functionals(m, tab.p()[j], taus, mc.dt, paths, mc.seed, Purpose::Table, opt);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (table node p=" + num(tab.p()[j]) + ")");
        }
        for (std::size_t s = 0; s < taus.size(); ++s) {
            const std::size_t k = nt - 2 - s;
            for (std::size_t i = 0; i < N; ++i) {
                const double kap = model.coef().kappa[i];
                const auto id = tab.idx(i, k, j);
                tab.c[id] = kap * run.ic[s].mean();
                tab.se_c[id] = kap * run.ic[s].se();
                if (!degenerate) {
                    tab.dc[id] = kap * pref * run.iz[s].mean();
                    tab.se_dc[id] = kap * std::abs(pref) * run.iz[s].se();
                }
            }
        }
    }
    // Barrier: every dc table is complete before C.
    for (std::size_t i = 0; i < N; ++i) {
        auto sol = solve_second_cauchy_fd(i, model, tab, v, FdDomain{0}, fd, tg);
        for (std::size_t k = 0; k < nt; ++k)
            for (std::size_t j = 0; j < tab.p().size(); ++j)
                tab.C[tab.idx(i, k, j)] = k + 1 == nt ? 0.0 : sol.interp(k, tab.p()[j]);
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Serialization: '#'-prefixed header, then one CSV row per (t, p, i).

inline void write_table_csv(std::ostream& os, const CauchyTable& tab, double T) {
    const auto& g = tab.grid();
    os << "# mvgame-cauchy-table v1\n";
    os << "# params_hash: " << tab.params_hash << '\n';
    os << "# provenance: " << to_string(tab.provenance) << '\n';
    os << "# source_variant: " << to_string(tab.variant) << '\n';
    os << "# interpolation: bilinear\n";
    os << "# T: " << num(T) << '\n';
    os << "# N: " << tab.N() << '\n';
    os << "# n_t: " << g.n_t << '\n';
    os << "# n_p: " << g.n_p << '\n';
    os << "# p_min: " << num(g.p_min) << '\n';
    os << "# p_max: " << num(g.p_max) << '\n';
    os << "# mc: paths_c=" << tab.mc.paths_c << " paths_dc=" << tab.mc.paths_dc << " dt=" << num(tab.mc.dt)
       << " seed=" << tab.mc.seed << '\n';
    os << "t,p,i,c,dc_dp,C,se_c,se_dc,se_C\n";
    for (std::size_t k = 0; k < tab.t().size(); ++k)
        for (std::size_t j = 0; j < tab.p().size(); ++j)
            for (std::size_t i = 0; i < tab.N(); ++i) {
                const auto id = tab.idx(i, k, j);
                os << num(tab.t()[k]) << ',' << num(tab.p()[j]) << ',' << i + 1 << ',' << num(tab.c[id]) << ','
                   << num(tab.dc[id]) << ',' << num(tab.C[id]) << ',' << num(tab.se_c[id]) << ','
                   << num(tab.se_dc[id]) << ',' << num(tab.se_C[id]) << '\n';
            }
}

inline CauchyTable read_table_csv(std::istream& is) {
    std::string line, key;
    double T = 0, pmin = 0, pmax = 0;
    std::size_t N = 0, nt = 0, np = 0;
    std::string hash, prov, var;
    McConfig mc;
    while (std::getline(is, line) && !line.empty() && line[0] == '#') {
        std::istringstream ss(line.substr(1));
        ss >> key;
        if (key == "params_hash:") ss >> hash;
        else if (key == "provenance:") ss >> prov;
        else if (key == "source_variant:") ss >> var;
        else if (key == "T:") ss >> T;
        else if (key == "N:") ss >> N;
        else if (key == "n_t:") ss >> nt;
        else if (key == "n_p:") ss >> np;
        else if (key == "p_min:") ss >> pmin;
        else if (key == "p_max:") ss >> pmax;
        else if (key == "mc:") {
            std::string kv;
            while (ss >> kv) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                std::string k = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (k == "paths_c") mc.paths_c = std::stoull(val);
                else if (k == "paths_dc") mc.paths_dc = std::stoull(val);
                else if (k == "dt") mc.dt = std::stod(val);
                else if (k == "seed") mc.seed = std::stoull(val);
            }
        }
    }
    if (N == 0 || nt < 2 || np < 2) throw std::runtime_error("read_table_csv: malformed header");
    CauchyTable tab(T, N, TableGrid{nt, np, pmin, pmax});
    tab.params_hash = hash;
    tab.provenance = prov == "FD" ? Provenance::FD : Provenance::MC;
    tab.variant = parse_variant(var);
    tab.mc = mc;
    auto parse = [](const std::string& s) {
        double x = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), x);
        if (r.ec != std::errc()) throw std::runtime_error("read_table_csv: bad number '" + s + "'");
        return x;
    };
    std::vector<std::string> cols;
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t j = 0; j < np; ++j)
            for (std::size_t i = 0; i < N; ++i) {
                if (!std::getline(is, line)) throw std::runtime_error("read_table_csv: truncated table");
                cols.clear();
                std::size_t a = 0;
                for (std::size_t b; (b = line.find(',', a)) != std::string::npos; a = b + 1) cols.push_back(line.substr(a, b - a));
                cols.push_back(line.substr(a));
                if (cols.size() != 9) throw std::runtime_error("read_table_csv: bad row");
                const auto id = tab.idx(i, k, j);
                tab.c[id] = parse(cols[3]);
                tab.dc[id] = parse(cols[4]);
                tab.C[id] = parse(cols[5]);
                tab.se_c[id] = parse(cols[6]);
                tab.se_dc[id] = parse(cols[7]);
                tab.se_C[id] = parse(cols[8]);
            }
    return tab;
}

}  // namespace mvg

#endif
