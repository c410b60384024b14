#ifndef MVGAME_VERIFY_HPP
#define MVGAME_VERIFY_HPP

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cauchy.hpp"
#include "config.hpp"
#include "equilibrium.hpp"
#include "filtering.hpp"
#include "game_sim.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "stats.hpp"
#include "stochastic_engine.hpp"

namespace mvg {

// Reference scenarios. Figure-1: constant drift, Figure-2: alternating drift.
inline ScenarioConfig figure1_config() {
    ScenarioConfig c;
    c.market = MarketParams{};
    c.market.r = 0.05;
    c.market.sigma = 0.1;
    c.market.mu1 = 0.2;
    c.market.mu2 = 0.02;
    c.market.T = 10;
    c.market.state = 1;
    c.market.mode = DriftMode::ConstantUnknown;
    c.mode = "constant-partial";
    for (int i = 1; i <= 10; ++i) c.investors.push_back({8 + 0.1 * i, 0.5, 0.5});
    c.x0.assign(10, 1.0);
    c.n_steps = 1000;
    c.realizations = 100;
    c.seed = 1001;
    c.path_stride = 10;
    return c;
}

inline ScenarioConfig figure2_config() {
    ScenarioConfig c = figure1_config();
    c.market.mode = DriftMode::Alternating;
    c.market.q1 = 10;
    c.market.q2 = 10;
    c.mode = "markov-partial";
    c.investors.clear();
    for (int i = 1; i <= 10; ++i) c.investors.push_back({0.1 * i, 0.9, 0.9});
    c.x0.assign(10, 5.0);
    return c;
}

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string summary;
    nlohmann::ordered_json data;
    double seconds = 0;
};

struct VerifyOptions {
    std::string cache_dir;  // Cauchy table cache; empty = build in memory
    std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "mvgame_verify";
};

namespace detail {

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline std::string fmt_pct(double x) {
    std::ostringstream o;
    o.precision(3);
    o << 100 * x << "%";
    return o.str();
}

inline std::string fmt(double x, int prec = 4) {
    std::ostringstream o;
    o.precision(prec);
    o << x;
    return o.str();
}

// Filter run on one simulated observation path, truth in state 1 (or the chain).
struct FilterPath {
    double terminal = 0;
    std::size_t clamps = 0;
};

}  // namespace detail

// 1. Posterior learns a constant drift.
inline CriterionResult criterion_filter_convergence() {
    CriterionResult r{1, "filter convergence", false, "", {}, 0};
    MarketParams m = figure1_config().market;
    m.T = 50;
    m.state = 1;
    const std::size_t paths = 1000, n = 5000;
    const TimeGrid grid(0.0, m.T, n);
    std::vector<double> term(paths), term_cf(paths);
    parallel_for(paths, [&](std::size_t k) {
        const auto tr = simulate_truth(m, grid, 101, k);
        term[k] = posterior_from_log_returns(tr.log_returns, 0.5, m, grid).P.back();
        term_cf[k] = posterior_closed_form(tr.log_returns, grid, 0.5, m).P.back();
    });
    std::size_t hit = 0, hit_cf = 0;
    for (std::size_t k = 0; k < paths; ++k) {
        hit += term[k] > 0.99;
        hit_cf += term_cf[k] > 0.99;
    }
    const double frac = double(hit) / paths;
    r.pass = frac >= 0.95;
    r.summary = "P(T)>0.99 in " + detail::fmt_pct(frac) + " of paths (need >= 95%), T=50, " +
                std::to_string(paths) + " paths";
    r.data = {{"fraction", frac}, {"fraction_closed_form", double(hit_cf) / paths}, {"paths", paths}, {"dt", grid.dt()}};
    return r;
}

// 2. Clamp rate of the posterior at dt = 1e-3 in both drift modes.
inline CriterionResult criterion_clamp_rate() {
    CriterionResult r{2, "posterior clamp rate", true, "", {}, 0};
    const std::size_t paths = 10000;
    std::string summ;
    for (const auto& cfg : {figure1_config(), figure2_config()}) {
        const auto& m = cfg.market;
        const TimeGrid grid(0.0, m.T, static_cast<std::size_t>(std::llround(m.T / 1e-3)));
        const std::size_t nb = (paths + kBlock - 1) / kBlock;
        std::vector<std::size_t> cl(nb, 0);
        parallel_for(nb, [&](std::size_t b) {
            for (std::size_t k = b * kBlock; k < std::min(paths, (b + 1) * kBlock); ++k) {
                const auto tr = simulate_truth(m, grid, 202, k);
                cl[b] += posterior_from_log_returns(tr.log_returns, 0.5, m, grid).clamps;
            }
        });
        std::size_t total = 0;
        for (auto c : cl) total += c;
        const double rate = double(total) / (double(paths) * grid.n_steps);
        const bool ok = rate < 1e-3;
        r.pass = r.pass && ok;
        r.data[cfg.mode] = {{"clamped_steps", total}, {"steps", paths * grid.n_steps}, {"rate", rate}};
        summ += std::string(summ.empty() ? "" : "; ") + (m.alternating() ? "alternating" : "constant") +
                " rate " + detail::fmt_pct(rate);
    }
    r.data["epsilon"] = kClampEps;
    r.summary = summ + " (need < 0.1%)";
    return r;
}

// 3. Closed-form posterior vs SDE filter.
inline CriterionResult criterion_filter_agreement() {
    CriterionResult r{3, "closed form vs SDE filter", false, "", {}, 0};
    MarketParams m = figure1_config().market;
    m.T = 1;
    const std::size_t paths = 100, n = 10000;
    const TimeGrid fine(0.0, 1.0, n), coarse(0.0, 1.0, n / 2);
    std::vector<double> dev_f(paths), dev_c(paths);
    parallel_for(paths, [&](std::size_t k) {
        const auto tr = simulate_truth(m, fine, 303, k);
        auto sde = posterior_from_log_returns(tr.log_returns, 0.5, m, fine);
        auto cf = posterior_closed_form(tr.log_returns, fine, 0.5, m);
        double d = 0;
        for (std::size_t j = 0; j <= n; ++j) d = std::max(d, std::abs(sde.P[j] - cf.P[j]));
        dev_f[k] = d;
        std::vector<double> lr(n / 2);
        for (std::size_t j = 0; j < n / 2; ++j) lr[j] = tr.log_returns[2 * j] + tr.log_returns[2 * j + 1];
        sde = posterior_from_log_returns(lr, 0.5, m, coarse);
        cf = posterior_closed_form(lr, coarse, 0.5, m);
        d = 0;
        for (std::size_t j = 0; j <= n / 2; ++j) d = std::max(d, std::abs(sde.P[j] - cf.P[j]));
        dev_c[k] = d;
    });
    double mx = 0, mf = 0, mc = 0;
    for (std::size_t k = 0; k < paths; ++k) {
        mx = std::max(mx, dev_f[k]);
        mf += dev_f[k] / paths;
        mc += dev_c[k] / paths;
    }
    r.pass = mx <= 1e-2 && mf < mc;
    r.summary = "max dev " + detail::fmt(mx) + " at dt=1e-4 (need <= 1e-2); mean max dev " + detail::fmt(mc) +
                " -> " + detail::fmt(mf) + " when dt halves";
    r.data = {{"max_dev_dt_1e-4", mx}, {"mean_max_dev_dt_1e-4", mf}, {"mean_max_dev_dt_2e-4", mc}, {"paths", paths}};
    return r;
}

// 4. MC c vs FD on the nested domain n = 64, plus monotonicity in n.
inline CriterionResult criterion_cauchy_cross_oracle() {
    CriterionResult r{4, "Cauchy cross-oracle", false, "", {}, 0};
    const auto cfg = figure1_config();
    const Model model = cfg.model();
    const auto probes = probe_nodes(model.T());
    const std::vector<double> t_out{probes[0].first, probes[3].first, probes[6].first, model.T()};
    McConfig mc;
    const FdGrid g;
    std::vector<FdSolution> nested;
    for (int n : {8, 16, 32, 64}) nested.push_back(solve_cauchy_fd(0, model, FdDomain{n}, g, t_out));
    const auto full = solve_cauchy_fd(0, model, FdDomain{0}, g, t_out);
    std::vector<Estimate> est(probes.size()), stopped(probes.size());
    parallel_for(probes.size(), [&](std::size_t q) {
        est[q] = estimate_c(probes[q].first, probes[q].second, 0, model, mc);
        stopped[q] = estimate_c_stopped(probes[q].first, probes[q].second, 0, 64, model, mc);
    });
    bool cross = true, mono = true, full_ok = true, stop_ok = true;
    double worst = 0;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t q = 0; q < probes.size(); ++q) {
        const auto [t, p] = probes[q];
        const std::size_t k = q / 3;
        std::vector<double> cn;
        for (const auto& s : nested) cn.push_back(s.interp(k, p));
        for (std::size_t a = 0; a + 1 < cn.size(); ++a)
            if (cn[a] > cn[a + 1] * (1 + 1e-9) + 1e-12) mono = false;
        const double e64 = detail::rel(cn.back(), est[q].value);
        worst = std::max(worst, e64);
        cross = cross && e64 <= 0.03;
        const double ef = detail::rel(full.interp(k, p), est[q].value);
        full_ok = full_ok && ef <= std::max(0.03, 3 * est[q].se / est[q].value);
        const double es = std::abs(cn.back() - stopped[q].value);
        stop_ok = stop_ok && es <= std::max(3 * stopped[q].se, 0.03 * std::abs(stopped[q].value));
        rows.push_back({{"t", t}, {"p", p}, {"mc", est[q].value}, {"mc_se", est[q].se}, {"fd_n8", cn[0]},
                        {"fd_n16", cn[1]}, {"fd_n32", cn[2]}, {"fd_n64", cn[3]}, {"rel_err_n64", e64},
                        {"fd_full", full.interp(k, p)}, {"rel_err_full", ef}, {"mc_stopped_n64", stopped[q].value},
                        {"mc_stopped_se", stopped[q].se}});
    }
    r.pass = cross && mono;
    r.summary = "max rel |FD(n=64)-MC| " + detail::fmt_pct(worst) + " (need <= 3%), monotone in n: " +
                (mono ? "yes" : "no") + "; supplementary: full-domain FD " + (full_ok ? "agrees" : "disagrees") +
                ", stopped MC vs FD(64) " + (stop_ok ? "agrees" : "disagrees");
    r.data = {{"probes", rows},
              {"max_rel_err_n64", worst},
              {"monotone", mono},
              {"supplementary_full_domain_agrees", full_ok},
              {"supplementary_stopped_mc_agrees", stop_ok}};
    return r;
}

// 5. Tangent-process derivative vs CRN central difference.
inline CriterionResult criterion_derivative() {
    CriterionResult r{5, "derivative representation", false, "", {}, 0};
    const auto cfg = figure1_config();
    const Model model = cfg.model();
    McConfig mc;
    mc.dt = 0.0025;
    const auto probes = probe_nodes(model.T());
    std::vector<Estimate> z(probes.size()), d(probes.size());
    for (std::size_t q = 0; q < probes.size(); ++q) {
        z[q] = estimate_dc_dp(probes[q].first, probes[q].second, 0, model, mc);
        d[q] = crn_difference_dc_dp(probes[q].first, probes[q].second, 1e-3, 0, model, mc);
    }
    bool ok = true;
    double worst = 0;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t q = 0; q < probes.size(); ++q) {
        const double diff = std::abs(z[q].value - d[q].value);
        const double tol = std::max(3 * std::hypot(z[q].se, d[q].se), 0.02 * std::abs(d[q].value));
        ok = ok && diff <= tol;
        worst = std::max(worst, diff / tol);
        rows.push_back({{"t", probes[q].first}, {"p", probes[q].second}, {"zeta", z[q].value}, {"zeta_se", z[q].se},
                        {"crn", d[q].value}, {"crn_se", d[q].se}, {"tolerance", tol}});
    }
    // Degenerate drift: identically zero, pointwise and in a table.
    auto dcfg = cfg;
    dcfg.market.mu2 = dcfg.market.mu1;
    const Model dm = dcfg.model();
    bool zero = true;
    for (const auto& [t, p] : probes) zero = zero && estimate_dc_dp(t, p, 0, dm, mc).value == 0.0;
    McConfig small{200, 200, 0.01, 7};
    auto tab = build_tables(dm, TableGrid{5, 5, 0.01, 0.99}, small);
    for (double v : tab.dc) zero = zero && v == 0.0;
    r.pass = ok && zero;
    r.summary = "worst |zeta-CRN|/tol " + detail::fmt(worst, 3) + " (need <= 1), degenerate drift gives exact 0: " +
                (zero ? "yes" : "no");
    r.data = {{"probes", rows}, {"inner_dt", mc.dt}, {"degenerate_zero", zero}};
    return r;
}

// 6. Regime-switching closed forms vs exact chain simulation.
inline CriterionResult criterion_markov_closed_forms() {
    CriterionResult r{6, "regime-switching closed forms", true, "", {}, 0};
    const auto cfg = figure2_config();
    const Model model = cfg.model();
    const auto& m = model.market();
    const std::size_t paths = 100000, i = 0;
    const double k = model.coef().kappa[i];
    auto sq = [&](int s) { return std::pow((m.mu(s) - m.r) / m.sigma, 2); };
    auto rows = nlohmann::ordered_json::array();
    double worst = 0;
    for (double t : {0.0, 5.0, 9.0})
        for (int s : {1, 2}) {
            auto check = [&](const char* what, double closed, double v1, double v2) {
                const auto e = markov_occupation_mc(t, s, v1, v2, m, paths, 606);
                const double z = std::abs(closed - e.value) / e.se;
                worst = std::max(worst, z);
                r.pass = r.pass && z <= 3.0;
                rows.push_back({{"quantity", what}, {"t", t}, {"m", s}, {"closed_form", closed}, {"mc", e.value},
                                {"mc_se", e.se}, {"z", z}});
            };
            check("c", closed_form_c_markov(t, s, i, model), k * sq(1), k * sq(2));
            for (auto v : {SourceVariant::Ansatz, SourceVariant::PaperMarkovSign}) {
                const std::string name = std::string("C/") + to_string(v);
                check(name.c_str(), closed_form_C_markov(t, s, i, model, v), Q_markov(model, i, 1, v),
                      Q_markov(model, i, 2, v));
            }
        }
    r.summary = "worst |closed-MC|/SE " + detail::fmt(worst, 3) + " over c and C at 6 (t,m) nodes (need <= 3)";
    r.data = {{"rows", rows}, {"paths", paths}, {"investor", 1}};
    return r;
}

// 7. Degenerate drift: partial information strategy equals the full-information one.
inline CriterionResult criterion_degenerate() {
    CriterionResult r{7, "degenerate reduction", false, "", {}, 0};
    auto cfg = figure1_config();
    cfg.market.mu2 = cfg.market.mu1;
    const Model model = cfg.model();
    McConfig small{200, 200, 0.01, 7};
    const auto tab = build_tables(model, TableGrid{9, 9, 0.01, 0.99}, small);
    std::vector<std::pair<double, double>> nodes = probe_nodes(model.T());
    for (double t : tab.t())
        for (double p : tab.p()) nodes.emplace_back(t, p);
    std::vector<StrategyParts> a(model.N()), b(model.N());
    double worst = 0;
    for (const auto& [t, p] : nodes) {
        strategy_parts_all(StrategyKind::PartialInfo, t, MarketState::posterior(p), model, &tab, a);
        strategy_parts_all(StrategyKind::FullInfoConstant, t, MarketState::none(), model, nullptr, b);
        for (std::size_t i = 0; i < model.N(); ++i) worst = std::max(worst, std::abs(a[i].total() - b[i].total()));
    }
    r.pass = worst <= 1e-12;
    r.summary = "max |partial - full| " + detail::fmt(worst, 3) + " over " + std::to_string(nodes.size()) +
                " (t,p) nodes, 10 investors (need <= 1e-12)";
    r.data = {{"max_abs_diff", worst}, {"nodes", nodes.size()}};
    return r;
}

inline ScenarioConfig with_cache(ScenarioConfig c, const VerifyOptions& o) {
    c.cache_dir = o.cache_dir;
    return c;
}

// 8. Value function vs Monte Carlo objective under the equilibrium profile.
inline CriterionResult criterion_value_objective(const VerifyOptions& opt) {
    CriterionResult r{8, "value-objective consistency", false, "", {}, 0};
    const auto cfg = with_cache(figure1_config(), opt);
    const Model model = cfg.model();
    const auto tab = obtain_tables(cfg, model);
    const auto probes = probe_nodes(model.T());
    const std::vector<double> t_out{probes[0].first, probes[3].first, probes[6].first, model.T()};
    const std::vector<SourceVariant> variants{SourceVariant::Ansatz, SourceVariant::PaperPrinted,
                                              SourceVariant::PaperMarkovSign};
    const std::size_t N = model.N();
    // C per variant from the same dc table.
    std::vector<std::vector<FdSolution>> Cv(variants.size());
    for (std::size_t a = 0; a < variants.size(); ++a)
        for (std::size_t i = 0; i < N; ++i)
            Cv[a].push_back(solve_second_cauchy_fd(i, model, tab, variants[a], FdDomain{0}, cfg.fd, t_out));
    const std::vector<double> x(N, 1.0);
    const auto profile = equilibrium_profile(StrategyKind::PartialInfo, model, &tab);
    auto rows = nlohmann::ordered_json::array();
    std::vector<bool> ok(variants.size(), true), ok_all(variants.size(), true);
    std::vector<double> worst(variants.size(), 0.0);
    for (std::size_t q = 0; q < probes.size(); ++q) {
        const auto [t, p] = probes[q];
        ObjectiveConfig oc;
        oc.n_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((model.T() - t) / 0.005)));
        const auto run = run_objective({profile}, t, x, MarketState::posterior(p), model, oc);
        for (std::size_t i = 0; i < N; ++i) {
            const auto J = run.estimate(0, i);
            auto row = nlohmann::ordered_json{{"t", t}, {"p", p}, {"i", i + 1}, {"J", J.J}, {"J_se", J.se_J}};
            const double g = std::exp(model.market().r * (model.T() - t)), lm = model.investors()[i].lambda_m;
            const double terminal = (1 - lm / N) * g - lm * g * (N - 1.0) / N;
            for (std::size_t a = 0; a < variants.size(); ++a) {
                const double V = terminal + Cv[a][i].interp(q / 3, p);
                const double z = std::abs(V - J.J) / J.se_J;
                row[std::string("V_") + to_string(variants[a])] = V;
                if (z > 3) ok_all[a] = false;
                if (i == 0) {
                    worst[a] = std::max(worst[a], z);
                    if (z > 3) ok[a] = false;
                }
            }
            rows.push_back(row);
        }
    }
    r.pass = ok[0];
    r.summary = "investor 1, worst |V-J|/SE: ansatz " + detail::fmt(worst[0], 3) + ", paper-printed " +
                detail::fmt(worst[1], 3) + ", paper-markov-sign " + detail::fmt(worst[2], 3) + " (need <= 3)";
    nlohmann::ordered_json verdict;
    for (std::size_t a = 0; a < variants.size(); ++a)
        verdict[to_string(variants[a])] = {{"investor_1_within_3se", bool(ok[a])},
                                           {"all_investors_within_3se", bool(ok_all[a])},
                                           {"investor_1_worst_z", worst[a]}};
    r.data = {{"rows", rows}, {"variants", verdict}, {"objective_paths", ObjectiveConfig{}.paths}};
    return r;
}

// 9. Intra-personal equilibrium: constant perturbations do not help; a wrong profile is caught.
inline CriterionResult criterion_intra_equilibrium() {
    CriterionResult r{9, "intra-personal equilibrium", false, "", {}, 0};
    auto cfg = figure1_config();
    cfg.mode = "constant-full";
    const Model model = cfg.model();
    const std::vector<double> x(model.N(), 1.0), hs{0.05, 0.1}, ds{-1.0, -0.5, 0.5, 1.0};
    ObjectiveConfig oc;
    const auto eq = intra_equilibrium_test(0, equilibrium_profile(StrategyKind::FullInfoConstant, model), 0.0, x,
                                           MarketState::none(), hs, ds, model, oc);
    const auto neg = intra_equilibrium_test(0, merton_profile(model), 0.0, x, MarketState::none(), hs, ds, model, oc);
    auto dump = [](const IntraReport& rep) {
        auto a = nlohmann::ordered_json::array();
        for (const auto& e : rep.entries)
            a.push_back({{"h", e.h}, {"delta", e.delta}, {"dJ", e.dJ}, {"se", e.se}, {"improves", e.improves}});
        return a;
    };
    double best_eq = -1e300, best_neg = -1e300;
    for (const auto& e : eq.entries) best_eq = std::max(best_eq, e.dJ / e.se);
    for (const auto& e : neg.entries) best_neg = std::max(best_neg, e.dJ / e.se);
    r.pass = eq.pass && !neg.pass;
    r.summary = "equilibrium max dJ/SE " + detail::fmt(best_eq, 3) + " (need <= 2); negative control max dJ/SE " +
                detail::fmt(best_neg, 3) + " (need > 2)";
    r.data = {{"equilibrium", dump(eq)}, {"negative_control", dump(neg)}, {"paths", oc.paths}};
    return r;
}

inline LossDistribution figure_run(ScenarioConfig cfg, const std::string& mode, const std::optional<CauchyTable>& tab) {
    cfg.mode = mode;
    const Scenario sc = cfg.scenario(tab ? &*tab : nullptr);
    return loss_distribution(sc, cfg.realizations, false);
}

// 10. Figure-1 loss distributions.
inline CriterionResult criterion_figure1(const VerifyOptions& opt) {
    CriterionResult r{10, "Figure-1 loss distributions", false, "", {}, 0};
    const auto cfg = with_cache(figure1_config(), opt);
    std::optional<CauchyTable> tab = obtain_tables(cfg, cfg.model());
    const auto full = figure_run(cfg, "constant-full", std::nullopt);
    const auto part = figure_run(cfg, "constant-partial", tab);
    std::size_t full_defaults = 0;
    for (std::size_t k = 1; k < full.hist.size(); ++k) full_defaults += full.hist[k] * k;
    const double all = part.all_default();
    r.pass = full_defaults == 0 && all >= 0.20 && all <= 0.50;
    r.summary = "full info defaults " + std::to_string(full_defaults) + " (need 0); partial P(all default) " +
                detail::fmt_pct(all) + " (need 20%-50%)";
    r.data = {{"full_histogram", full.hist}, {"partial_histogram", part.hist}, {"seed", cfg.seed},
              {"realizations", cfg.realizations}};
    return r;
}

// 11. Figure-2 loss distributions.
inline CriterionResult criterion_figure2(const VerifyOptions& opt) {
    CriterionResult r{11, "Figure-2 loss distributions", false, "", {}, 0};
    const auto cfg = with_cache(figure2_config(), opt);
    std::optional<CauchyTable> tab = obtain_tables(cfg, cfg.model());
    const auto full = figure_run(cfg, "markov-full", std::nullopt);
    const auto part = figure_run(cfg, "markov-partial", tab);
    const double af = full.all_default(), ap = part.all_default();
    r.pass = ap - af >= 0.05 && af >= 0.25 && af <= 0.60;
    r.summary = "P(all default) full " + detail::fmt_pct(af) + " -> partial " + detail::fmt_pct(ap) +
                " (need gap >= 5pp, full in 25%-60%)";
    r.data = {{"full_histogram", full.hist}, {"partial_histogram", part.hist}, {"seed", cfg.seed},
              {"realizations", cfg.realizations}};
    return r;
}

// 12. Artifacts regenerated from the manifest are byte-identical.
inline CriterionResult criterion_determinism(const VerifyOptions& opt) {
    namespace fs = std::filesystem;
    CriterionResult r{12, "determinism", false, "", {}, 0};
    auto cfg = figure1_config();
    cfg.realizations = 6;
    cfg.n_steps = 200;
    cfg.table_grid = TableGrid{8, 9, 0.01, 0.99};
    cfg.mc = McConfig{400, 400, 0.02, 99};
    cfg.fd = FdGrid{128, 256};
    cfg.path_stride = 1;
    const fs::path a = opt.work_dir / "determinism_a", b = opt.work_dir / "determinism_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const unsigned before = thread_count();
    set_threads(1);
    run_simulate(cfg, a);
    const auto again = load_config(a / "manifest.yaml");
    set_threads(3);
    run_simulate(again, b);
    set_threads(before);
    bool same = true;
    std::vector<std::string> files, differ;
    for (const auto& e : fs::directory_iterator(a)) files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        if (!fs::exists(b / f) || read_file(a / f) != read_file(b / f)) {
            same = false;
            differ.push_back(f);
        }
    }
    r.pass = same && files.size() >= 6;
    r.summary = std::to_string(files.size()) + " artifacts compared after regenerating from the manifest with a "
                "different thread count; " + (same ? "all byte-identical" : std::to_string(differ.size()) + " differ");
    r.data = {{"files", files}, {"differ", differ}};
    return r;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> s{"filter", "cauchy", "equilibrium", "figures", "determinism"};
    return s;
}

inline std::vector<int> suite_members(const std::string& suite) {
    if (suite == "filter") return {1, 2, 3};
    if (suite == "cauchy") return {4, 5, 6};
    if (suite == "equilibrium") return {7, 8, 9};
    if (suite == "figures") return {10, 11};
    if (suite == "determinism") return {12};
    if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    throw ConfigError("verify: unknown suite '" + suite + "'");
}

inline CriterionResult run_criterion(int id, const VerifyOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    CriterionResult r;
    switch (id) {
        case 1: r = criterion_filter_convergence(); break;
        case 2: r = criterion_clamp_rate(); break;
        case 3: r = criterion_filter_agreement(); break;
        case 4: r = criterion_cauchy_cross_oracle(); break;
        case 5: r = criterion_derivative(); break;
        case 6: r = criterion_markov_closed_forms(); break;
        case 7: r = criterion_degenerate(); break;
        case 8: r = criterion_value_objective(opt); break;
        case 9: r = criterion_intra_equilibrium(); break;
        case 10: r = criterion_figure1(opt); break;
        case 11: r = criterion_figure2(opt); break;
        case 12: r = criterion_determinism(opt); break;
        default: throw std::invalid_argument("no criterion " + std::to_string(id));
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline nlohmann::ordered_json to_json(const CriterionResult& r) {
    return {{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"summary", r.summary}, {"seconds", r.seconds},
            {"data", r.data}};
}

}  // namespace mvg

#endif
