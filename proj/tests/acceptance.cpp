// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance                 all twelve
//   acceptance --only 4 --only 5
//   acceptance --cache DIR     reuse Cauchy tables across runs
// Exit status is nonzero when any selected criterion fails.

#include <iostream>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mvgame/verify.hpp"

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    std::string cache, json_out;
    app.add_option("--only", only, "criterion ids (1-12)")->check(CLI::Range(1, 12));
    app.add_option("--cache", cache, "Cauchy table cache directory");
    app.add_option("--json", json_out, "write JSON verdicts here");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::warn);

    if (only.empty()) only = mvg::suite_members("all");
    mvg::VerifyOptions opt;
    opt.cache_dir = cache;
    if (!cache.empty()) opt.work_dir = std::filesystem::path(cache).parent_path() / "acceptance_work";

    bool all_pass = true;
    nlohmann::ordered_json verdicts = nlohmann::ordered_json::array();
    for (int id : only) {
        mvg::CriterionResult r;
        try {
            r = mvg::run_criterion(id, opt);
        } catch (const std::exception& e) {
            r.id = id;
            r.name = "criterion " + std::to_string(id);
            r.pass = false;
            r.summary = std::string("error: ") + e.what();
        }
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << r.id << " (" << r.name << "): " << r.summary
                  << "  [" << static_cast<int>(r.seconds) << " s]" << std::endl;
        verdicts.push_back(mvg::to_json(r));
    }
    if (!json_out.empty()) mvg::open_out(json_out) << verdicts.dump(2) << '\n';
    return all_pass ? 0 : 1;
}
