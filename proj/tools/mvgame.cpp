// mvgame: scenario-driven runner for the relative-performance investment game.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mvgame/config.hpp"
#include "mvgame/parallel.hpp"
#include "mvgame/pipeline.hpp"
#include "mvgame/verify.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kNumerical = 3, kGate = 4 };

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

mvg::ScenarioConfig load(const Common& c) {
    if (c.config.empty()) throw mvg::ConfigError("--config: required");
    auto cfg = mvg::load_config(c.config);
    if (c.seed_set) cfg.seed = c.seed;
    if (!c.out.empty()) cfg.output_dir = c.out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-variance relative-performance game under partial information"};
    app.require_subcommand(1);
    unsigned threads = 0;
    bool strict = false, quiet = false;
    app.add_option("--threads", threads, "worker threads (0 = all cores)");
    app.add_flag("--strict", strict, "exit 4 when a built-in gate fails");
    app.add_flag("-q,--quiet", quiet, "only warnings and errors");

    Common sim, solve, demo;
    auto* s1 = app.add_subcommand("simulate", "run the loss-distribution simulation for a scenario");
    auto* s2 = app.add_subcommand("solve-cauchy", "build Cauchy tables and a cross-oracle report");
    auto* s3 = app.add_subcommand("filter-demo", "filter one simulated price path");
    for (auto [sub, c] : {std::pair{s1, &sim}, std::pair{s2, &solve}, std::pair{s3, &demo}}) {
        sub->add_option("--config", c->config, "scenario YAML file")->required();
        sub->add_option("--out", c->out, "output directory (overrides output.dir)");
        sub->add_option("--seed", c->seed, "simulation seed (overrides simulation.seed)")
            ->each([c](const std::string&) { c->seed_set = true; });
        sub->add_flag("--strict", strict, "exit 4 when a built-in gate fails");
    }

    std::string suite = "all", json_out, cache;
    std::vector<int> only;
    auto* s4 = app.add_subcommand("verify", "run acceptance suites");
    s4->add_option("suite", suite, "filter | cauchy | equilibrium | figures | determinism | all");
    s4->add_option("--only", only, "criterion ids to run instead of a suite");
    s4->add_option("--json", json_out, "write the JSON verdicts to this file");
    s4->add_option("--cache", cache, "Cauchy table cache directory");
    s4->add_option("--out", json_out, "alias of --json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
    mvg::set_threads(threads);

    try {
        if (*s1) {
            const auto cfg = load(sim);
            auto res = mvg::run_simulate(cfg, cfg.output_dir);
            const auto& d = res.summary["default_probability"];
            std::cout << "wrote " << cfg.output_dir << "  params_hash " << res.summary["params_hash"].get<std::string>()
                      << "  P(all default) " << d["all_default"].get<double>() << "  P(no default) "
                      << 1.0 - d["any_default"].get<double>() << '\n';
            const double rate = res.summary["clamps"]["posterior_clamp_rate"].get<double>();
            if (strict && rate >= 1e-3) {
                std::cerr << "gate failed: posterior clamp rate " << rate << " >= 0.1%\n";
                return kGate;
            }
        } else if (*s2) {
            const auto cfg = load(solve);
            auto res = mvg::run_solve_cauchy(cfg, cfg.output_dir);
            std::cout << "wrote " << cfg.output_dir << '\n';
            if (res.report.contains("max_rel_mc_fd_full")) {
                std::cout << "max relative MC-FD discrepancy at probe nodes: full domain "
                          << res.report["max_rel_mc_fd_full"].get<double>() << ", nested n=64 "
                          << res.report["max_rel_mc_fd_n64"].get<double>() << '\n';
                if (strict && res.report["max_rel_mc_fd_full"].get<double>() > 0.03) {
                    std::cerr << "gate failed: MC-FD discrepancy above 3%\n";
                    return kGate;
                }
            }
        } else if (*s3) {
            const auto cfg = load(demo);
            auto s = mvg::run_filter_demo(cfg, cfg.output_dir);
            std::cout << "wrote " << cfg.output_dir << "  terminal P " << s["terminal_posterior"].get<double>() << '\n';
        } else if (*s4) {
            std::vector<int> ids = only.empty() ? mvg::suite_members(suite) : only;
            mvg::VerifyOptions opt;
            opt.cache_dir = cache;
            nlohmann::ordered_json all = nlohmann::ordered_json::array();
            bool pass = true;
            for (int id : ids) {
                auto r = mvg::run_criterion(id, opt);
                pass = pass && r.pass;
                std::cout << (r.pass ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << ": " << r.summary
                          << "  (" << static_cast<int>(r.seconds) << " s)" << std::endl;
                all.push_back(mvg::to_json(r));
            }
            if (!json_out.empty()) {
                auto o = mvg::open_out(json_out);
                o << all.dump(2) << '\n';
            } else {
                std::cout << all.dump() << '\n';
            }
            return pass ? kOk : kGate;
        }
    } catch (const mvg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const mvg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
