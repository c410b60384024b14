#ifndef MVGAME_PIPELINE_HPP
#define MVGAME_PIPELINE_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
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

namespace mvg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string artifact_tag(const ScenarioConfig& c) {
    return "# params_hash: " + params_hash(c) + " seed: " + std::to_string(c.seed) + '\n';
}

// Builds the Cauchy tables or loads them from cache_dir/tables_<hash>.csv.
inline CauchyTable obtain_tables(const ScenarioConfig& cfg, const Model& model) {
    const std::string hash = table_hash(cfg);
    fs::path file;
    if (!cfg.cache_dir.empty()) {
        file = fs::path(cfg.cache_dir) / ("tables_" + hash + ".csv");
        if (fs::exists(file)) {
            std::ifstream in(file);
            auto tab = read_table_csv(in);
            if (tab.params_hash == hash && tab.N() == model.N()) {
                spdlog::info("loaded cached tables {}", file.string());
                return tab;
            }
            spdlog::warn("cached table {} does not match, rebuilding", file.string());
        }
    }
    spdlog::info("building Cauchy tables ({} x {} nodes, {} investors)", cfg.table_grid.n_t, cfg.table_grid.n_p,
                 model.N());
    auto tab = build_tables(model, cfg.table_grid, cfg.mc, cfg.fd, cfg.variant);
    tab.params_hash = hash;
    if (!file.empty()) {
        // write then rename so a killed run never leaves a truncated cache entry
        fs::create_directories(file.parent_path());
        auto tmp = file;
        tmp += ".tmp";
        {
            std::ofstream out(tmp);
            write_table_csv(out, tab, model.T());
        }
        fs::rename(tmp, file);
    }
    return tab;
}

struct SimulateResult {
    LossDistribution ld;
    json summary;
    fs::path out;
};

inline json loss_summary(const ScenarioConfig& cfg, const LossDistribution& ld, const CauchyTable* table) {
    const std::size_t N = cfg.investors.size();
    json s;
    s["params_hash"] = params_hash(cfg);
    s["seed"] = cfg.seed;
    s["mode"] = cfg.mode;
    s["strategy"] = to_string(cfg.strategy);
    s["realizations"] = ld.R;
    s["investors"] = N;
    s["loss_histogram"] = ld.hist;
    std::vector<double> pk;
    for (std::size_t k = 0; k <= N; ++k) pk.push_back(ld.prob(k));
    s["default_probability"] = {{"by_count", pk}, {"all_default", ld.all_default()}, {"any_default", ld.any_default()}};
    std::vector<double> per(N, 0.0), mean(N), sd(N);
    std::vector<Accumulator> term(N);
    Accumulator avg;
    for (const auto& r : ld.results) {
        for (std::size_t i = 0; i < N; ++i) per[i] += r.defaulted[i];
        if (r.X.empty()) continue;
        const double* xt = &r.X[r.grid.n_steps * N];
        double a = 0;
        for (std::size_t i = 0; i < N; ++i) {
            term[i].add(xt[i]);
            a += xt[i];
        }
        avg.add(a / N);
    }
    for (std::size_t i = 0; i < N; ++i) {
        per[i] /= static_cast<double>(ld.R);
        mean[i] = term[i].mean();
        sd[i] = std::sqrt(term[i].variance());
    }
    s["default_probability"]["per_investor"] = per;
    s["terminal_wealth"] = {{"mean", mean}, {"sd", sd}, {"average_mean", avg.mean()},
                            {"average_sd", std::sqrt(avg.variance())}};
    s["clamps"] = {{"posterior_clamped_steps", ld.posterior_clamps},
                   {"posterior_steps", ld.posterior_steps},
                   {"posterior_clamp_rate", ld.posterior_steps ? double(ld.posterior_clamps) / ld.posterior_steps : 0.0},
                   {"table_clamped_queries", table ? table->clamp_count() : 0}};
    if (table) s["table_hash"] = table->params_hash;
    return s;
}

inline void write_text(const fs::path& p, const std::string& s) {
    auto o = open_out(p);
    o << s;
}

inline SimulateResult run_simulate(const ScenarioConfig& cfg, const fs::path& out) {
    const Model model = cfg.model();
    std::optional<CauchyTable> table;
    if (cfg.needs_table()) table = obtain_tables(cfg, model);
    const CauchyTable* tp = table ? &*table : nullptr;
    if (tp) tp->reset_clamps();
    Scenario sc = cfg.scenario(tp);
    sc.validate();
    spdlog::info("simulating {} realizations ({}, {})", cfg.realizations, cfg.mode, to_string(cfg.strategy));
    SimulateResult res;
    res.ld = loss_distribution(sc, cfg.realizations, true);
    res.out = out;
    res.summary = loss_summary(cfg, res.ld, tp);

    fs::create_directories(out);
    write_text(out / "manifest.yaml", "# params_hash: " + params_hash(cfg) + "\n" + manifest_yaml(cfg));
    const std::string tag = artifact_tag(cfg);
    {
        auto o = open_out(out / "wealth.csv");
        o << tag;
        write_wealth_csv(o, res.ld, cfg.path_stride);
    }
    {
        auto o = open_out(out / "posterior.csv");
        o << tag;
        write_posterior_paths_csv(o, res.ld, cfg.path_stride);
    }
    {
        auto o = open_out(out / "loss_hist.csv");
        o << tag;
        write_loss_hist_csv(o, res.ld);
    }
    if (tp) {
        auto o = open_out(out / "tables.csv");
        write_table_csv(o, *tp, model.T());
    }
    write_text(out / "summary.json", res.summary.dump(2) + "\n");
    return res;
}

// Probe grid for table reports: t in {0, T/2, 0.9T}, p in {0.25, 0.5, 0.75}.
inline std::vector<std::pair<double, double>> probe_nodes(double T) {
    std::vector<std::pair<double, double>> v;
    for (double ft : {0.0, 0.5, 0.9})
        for (double p : {0.25, 0.5, 0.75}) v.emplace_back(ft * T, p);
    return v;
}

struct SolveCauchyResult {
    json report;
    CauchyTable table;
};

// Tables plus an MC-vs-FD cross check at the probe nodes and a strategy/value probe.
inline SolveCauchyResult run_solve_cauchy(const ScenarioConfig& cfg, const fs::path& out) {
    const Model model = cfg.model();
    const auto& m = model.market();
    SolveCauchyResult res;
    fs::create_directories(out);
    write_text(out / "manifest.yaml", "# params_hash: " + params_hash(cfg) + "\n" + manifest_yaml(cfg));
    json rep;
    rep["params_hash"] = params_hash(cfg);
    rep["seed"] = cfg.mc.seed;
    const std::string tag = artifact_tag(cfg);

    if (m.alternating()) {
        // Full-information regime switching: closed forms per state.
        auto o = open_out(out / "markov_closed_forms.csv");
        o << tag << "t,m,i,c,C\n";
        for (std::size_t k = 0; k < cfg.table_grid.n_t; ++k) {
            const double t = m.T * static_cast<double>(k) / (cfg.table_grid.n_t - 1);
            for (int st : {1, 2})
                for (std::size_t i = 0; i < model.N(); ++i)
                    o << num(t) << ',' << st << ',' << i + 1 << ',' << num(closed_form_c_markov(t, st, i, model))
                      << ',' << num(closed_form_C_markov(t, st, i, model, cfg.variant)) << '\n';
        }
        rep["markov_closed_forms"] = "markov_closed_forms.csv";
    }

    res.table = obtain_tables(cfg, model);
    const auto& tab = res.table;
    {
        auto o = open_out(out / "tables.csv");
        write_table_csv(o, tab, m.T);
    }
    const auto probes = probe_nodes(m.T);
    std::vector<double> t_out;
    for (std::size_t k = 0; k < 3; ++k) t_out.push_back(probes[3 * k].first);
    t_out.push_back(m.T);
    const auto fd_full = solve_cauchy_fd(0, model, FdDomain{0}, cfg.fd, t_out);
    const auto fd64 = solve_cauchy_fd(0, model, FdDomain{64}, cfg.fd, t_out);
    json rows = json::array();
    double max_full = 0, max_64 = 0, max_tab = 0;
    std::vector<Estimate> mc(probes.size());
    parallel_for(probes.size(), [&](std::size_t q) {
        mc[q] = estimate_c(probes[q].first, probes[q].second, 0, model, cfg.mc);
    });
    for (std::size_t q = 0; q < probes.size(); ++q) {
        const auto [t, p] = probes[q];
        const double f = fd_full.interp(q / 3, p), f64 = fd64.interp(q / 3, p), tb = tab.c_at(0, t, p);
        const double rf = std::abs(f - mc[q].value) / std::abs(mc[q].value);
        const double r64 = std::abs(f64 - mc[q].value) / std::abs(mc[q].value);
        const double rt = std::abs(tb - mc[q].value) / std::abs(mc[q].value);
        max_full = std::max(max_full, rf);
        max_64 = std::max(max_64, r64);
        max_tab = std::max(max_tab, rt);
        rows.push_back({{"t", t}, {"p", p}, {"mc", mc[q].value}, {"mc_se", mc[q].se}, {"fd_full", f},
                        {"fd_n64", f64}, {"table", tb}});
    }
    rep["investor"] = 1;
    rep["probes"] = rows;
    rep["max_rel_mc_fd_full"] = max_full;
    rep["max_rel_mc_fd_n64"] = max_64;
    rep["max_rel_mc_table"] = max_tab;
    double max_dc = 0, max_terminal = 0;
    for (std::size_t i = 0; i < tab.N(); ++i)
        for (std::size_t j = 0; j < tab.p().size(); ++j) {
            for (std::size_t k = 0; k < tab.t().size(); ++k) max_dc = std::max(max_dc, std::abs(tab.dc[tab.idx(i, k, j)]));
            const auto id = tab.idx(i, tab.t().size() - 1, j);
            max_terminal = std::max({max_terminal, std::abs(tab.c[id]), std::abs(tab.dc[id]), std::abs(tab.C[id])});
        }
    rep["max_abs_dc_dp"] = max_dc;
    rep["max_abs_terminal_row"] = max_terminal;
    write_text(out / "report.json", rep.dump(2) + "\n");

    // Strategy and value probe at the probe nodes, unit wealth.
    auto o = open_out(out / "strategy_probe.csv");
    o << tag << "t,p,i,pi_star,first_term,second_term,V_i\n";
    const std::vector<double> x(model.N(), 1.0);
    std::vector<StrategyParts> parts(model.N());
    for (const auto& [t, p] : probes) {
        const auto s = MarketState::posterior(p);
        strategy_parts_all(StrategyKind::PartialInfo, t, s, model, &tab, parts);
        for (std::size_t i = 0; i < model.N(); ++i)
            o << num(t) << ',' << num(p) << ',' << i + 1 << ',' << num(parts[i].total()) << ','
              << num(parts[i].first) << ',' << num(parts[i].second) << ','
              << num(value_function(StrategyKind::PartialInfo, t, x, s, i, model, &tab, cfg.variant)) << '\n';
    }
    res.report = rep;
    return res;
}

// One observed path through the filter, with the closed form where it exists.
inline json run_filter_demo(const ScenarioConfig& cfg, const fs::path& out) {
    const auto& m = cfg.market;
    const TimeGrid grid(0.0, m.T, cfg.n_steps);
    const auto truth = simulate_truth(m, grid, cfg.seed, 0);
    const auto sde = posterior_from_observations(truth.S, cfg.prior, m, grid);
    std::optional<PosteriorPath> closed;
    if (!m.alternating()) closed = posterior_closed_form(truth.log_returns, grid, cfg.prior, m);
    fs::create_directories(out);
    write_text(out / "manifest.yaml", "# params_hash: " + params_hash(cfg) + "\n" + manifest_yaml(cfg));
    auto o = open_out(out / "filter_demo.csv");
    o << artifact_tag(cfg) << "t,S,true_mu,P,P_closed_form,innovation_increment\n";
    double max_dev = 0;
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        o << num(grid.time(k)) << ',' << num(truth.S[k]) << ',' << num(truth.mu[std::min(k, grid.n_steps - 1)]) << ','
          << num(sde.P[k]) << ',';
        if (closed) {
            o << num(closed->P[k]);
            max_dev = std::max(max_dev, std::abs(closed->P[k] - sde.P[k]));
        }
        o << ',';
        if (k < grid.n_steps) o << num(sde.innovations[k]);
        o << '\n';
    }
    json s;
    s["params_hash"] = params_hash(cfg);
    s["seed"] = cfg.seed;
    s["terminal_posterior"] = sde.P.back();
    s["clamped_steps"] = sde.clamps;
    if (closed) s["max_abs_deviation_closed_form"] = max_dev;
    write_text(out / "summary.json", s.dump(2) + "\n");
    return s;
}

}  // namespace mvg

#endif
