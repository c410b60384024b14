#ifndef MVGAME_CONFIG_HPP
#define MVGAME_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "cauchy.hpp"
#include "core_model.hpp"
#include "game_sim.hpp"
#include "io.hpp"

namespace mvg {

struct ScenarioConfig {
    MarketParams market;
    std::vector<InvestorParams> investors;
    std::vector<double> x0;
    std::string mode = "constant-partial";
    StrategyChoice strategy = StrategyChoice::Equilibrium;
    double prior = 0.5;

    std::size_t n_steps = 1000;
    std::size_t realizations = 100;
    std::uint64_t seed = 1;
    std::size_t path_stride = 1;

    TableGrid table_grid;
    McConfig mc;
    FdGrid fd;
    SourceVariant variant = SourceVariant::Ansatz;
    std::string cache_dir;

    std::string output_dir = "out";

    Information info() const { return mode.ends_with("-full") ? Information::Full : Information::Partial; }
    Model model() const { return Model(market, investors); }
    Scenario scenario(const CauchyTable* table) const {
        Scenario sc{model(), info(), strategy, prior, n_steps, x0, table, seed};
        return sc;
    }
    bool needs_table() const { return info() == Information::Partial && strategy == StrategyChoice::Equilibrium; }
};

namespace detail {

inline double parse_double(const std::string& s, const std::string& field) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (...) {
        throw ConfigError(field + ": not a number: '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError(field + ": not a number: '" + s + "'");
    return v;
}

// "a + b*i", "b*i", "i*b", "a", also with '-' terms; i runs 1..count.
inline std::vector<double> affine_series(const std::string& expr, std::size_t count, const std::string& field) {
    std::string s;
    for (char ch : expr)
        if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    if (s.empty()) throw ConfigError(field + ": empty expression");
    double a = 0, b = 0;
    std::size_t k = 0;
    while (k < s.size()) {
        double sign = 1;
        if (s[k] == '+' || s[k] == '-') {
            sign = s[k] == '-' ? -1 : 1;
            ++k;
        }
        std::size_t e = k;
        while (e < s.size() && !((s[e] == '+' || s[e] == '-') && e > k && s[e - 1] != 'e' && s[e - 1] != 'E')) ++e;
        std::string term = s.substr(k, e - k);
        if (term.empty()) throw ConfigError(field + ": malformed expression '" + expr + "'");
        auto star = term.find('*');
        if (term == "i") {
            b += sign;
        } else if (star == std::string::npos) {
            a += sign * parse_double(term, field);
        } else {
            std::string l = term.substr(0, star), r = term.substr(star + 1);
            if (r == "i") b += sign * parse_double(l, field);
            else if (l == "i") b += sign * parse_double(r, field);
            else throw ConfigError(field + ": only affine expressions in i are supported: '" + expr + "'");
        }
        k = e;
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = a + b * static_cast<double>(i + 1);
    return out;
}

inline std::vector<double> series(const YAML::Node& n, std::size_t count, const std::string& field) {
    if (!n) throw ConfigError(field + ": missing");
    if (n.IsSequence()) {
        if (n.size() != count) throw ConfigError(field + ": expected " + std::to_string(count) + " values");
        std::vector<double> out;
        for (const auto& v : n) out.push_back(parse_double(v.as<std::string>(), field));
        return out;
    }
    if (!n.IsScalar()) throw ConfigError(field + ": expected a number, list or expression in i");
    const std::string s = n.as<std::string>();
    if (s.find('i') != std::string::npos) return affine_series(s, count, field);
    return std::vector<double>(count, parse_double(s, field));
}

inline const YAML::Node child(const YAML::Node& n, const char* key) {
    return n ? n[key] : YAML::Node(YAML::NodeType::Undefined);
}

inline double req_double(const YAML::Node& n, const char* key, const std::string& sect) {
    const auto v = child(n, key);
    if (!v) throw ConfigError(sect + "." + key + ": missing required field");
    return parse_double(v.as<std::string>(), sect + "." + key);
}

inline double opt_double(const YAML::Node& n, const char* key, const std::string& sect, double def) {
    const auto v = child(n, key);
    return v ? parse_double(v.as<std::string>(), sect + "." + key) : def;
}

inline std::uint64_t opt_uint(const YAML::Node& n, const char* key, const std::string& sect, std::uint64_t def) {
    const auto v = child(n, key);
    if (!v) return def;
    try {
        std::string s = v.as<std::string>();
        std::size_t pos = 0;
        auto x = std::stoull(s, &pos);
        if (pos != s.size() || s[0] == '-') throw 0;
        return x;
    } catch (...) {
        throw ConfigError(sect + "." + key + ": expected a nonnegative integer");
    }
}

inline std::string opt_string(const YAML::Node& n, const char* key, std::string def) {
    const auto v = child(n, key);
    return v ? v.as<std::string>() : def;
}

}  // namespace detail

inline ScenarioConfig parse_config(const YAML::Node& root) {
    using namespace detail;
    if (!root || !root.IsMap()) throw ConfigError("config: expected a mapping at top level");
    ScenarioConfig c;
    c.mode = opt_string(root, "mode", c.mode);
    if (c.mode != "constant-full" && c.mode != "constant-partial" && c.mode != "markov-full" &&
        c.mode != "markov-partial")
        throw ConfigError("mode: expected constant-full | constant-partial | markov-full | markov-partial");

    const auto mk = root["market"];
    if (!mk) throw ConfigError("market: missing section");
    c.market.r = req_double(mk, "r", "market");
    c.market.sigma = req_double(mk, "sigma", "market");
    c.market.mu1 = req_double(mk, "mu1", "market");
    c.market.mu2 = req_double(mk, "mu2", "market");
    c.market.T = req_double(mk, "T", "market");
    c.market.mode = c.mode.starts_with("markov") ? DriftMode::Alternating : DriftMode::ConstantUnknown;
    if (c.market.alternating()) {
        c.market.q1 = req_double(mk, "q1", "market");
        c.market.q2 = req_double(mk, "q2", "market");
    } else {
        c.market.q1 = opt_double(mk, "q1", "market", 0.0);
        c.market.q2 = opt_double(mk, "q2", "market", 0.0);
    }
    c.market.state = static_cast<int>(opt_uint(mk, "state", "market", 1));
    c.market.validate();

    const auto iv = root["investors"];
    if (!iv) throw ConfigError("investors: missing section");
    const std::size_t n = opt_uint(iv, "count", "investors", 0);
    if (n == 0) throw ConfigError("investors.count: missing or zero");
    auto g = series(iv["gamma"], n, "investors.gamma");
    auto lm = series(iv["lambda_m"], n, "investors.lambda_m");
    auto lv = series(iv["lambda_v"], n, "investors.lambda_v");
    c.x0 = iv["initial_wealth"] ? series(iv["initial_wealth"], n, "investors.initial_wealth")
                                : std::vector<double>(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) c.investors.push_back({g[i], lm[i], lv[i]});
    compute_coefficients(c.investors);

    const std::string st = opt_string(root, "strategy", "equilibrium");
    if (st == "equilibrium") c.strategy = StrategyChoice::Equilibrium;
    else if (st == "first-term-only") c.strategy = StrategyChoice::FirstTermOnly;
    else if (st == "full-info-baseline") c.strategy = StrategyChoice::FullInfoBaseline;
    else throw ConfigError("strategy: expected equilibrium | first-term-only | full-info-baseline");
    c.prior = opt_double(root, "prior", "config", c.prior);

    const auto sim = root["simulation"];
    c.n_steps = opt_uint(sim, "n_steps", "simulation", c.n_steps);
    c.realizations = opt_uint(sim, "realizations", "simulation", c.realizations);
    c.seed = opt_uint(sim, "seed", "simulation", c.seed);
    c.path_stride = opt_uint(sim, "path_stride", "simulation", c.path_stride);
    if (c.realizations < 1) throw ConfigError("simulation.realizations: must be >= 1");
    if (c.path_stride < 1) throw ConfigError("simulation.path_stride: must be >= 1");

    const auto tb = root["tables"];
    c.table_grid.n_t = opt_uint(tb, "n_t", "tables", c.table_grid.n_t);
    c.table_grid.n_p = opt_uint(tb, "n_p", "tables", c.table_grid.n_p);
    c.table_grid.p_min = opt_double(tb, "p_min", "tables", c.table_grid.p_min);
    c.table_grid.p_max = opt_double(tb, "p_max", "tables", c.table_grid.p_max);
    c.mc.paths_c = opt_uint(tb, "paths_c", "tables", c.mc.paths_c);
    c.mc.paths_dc = opt_uint(tb, "paths_dc", "tables", c.mc.paths_dc);
    c.mc.dt = opt_double(tb, "dt", "tables", c.mc.dt);
    c.mc.seed = opt_uint(tb, "seed", "tables", c.mc.seed);
    c.fd.space_nodes = opt_uint(tb, "fd_space_nodes", "tables", c.fd.space_nodes);
    c.fd.time_steps = opt_uint(tb, "fd_time_steps", "tables", c.fd.time_steps);
    c.variant = parse_variant(opt_string(tb, "source_variant", "ansatz"));
    c.cache_dir = opt_string(tb, "cache_dir", "");
    c.table_grid.validate();
    if (!(c.mc.dt > 0)) throw ConfigError("tables.dt: must be > 0");
    if (c.mc.paths_c < 2 || c.mc.paths_dc < 2) throw ConfigError("tables.paths_c/paths_dc: must be >= 2");

    c.output_dir = opt_string(root["output"], "dir", c.output_dir);
    c.scenario(nullptr);  // validates the model
    if (!(c.prior > 0 && c.prior < 1)) throw ConfigError("prior: must lie in (0,1)");
    if (c.info() == Information::Full && c.strategy == StrategyChoice::FirstTermOnly)
        throw ConfigError("strategy: first-term-only needs a partial-information mode");
    return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& p) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(p.string());
    } catch (const YAML::BadFile&) {
        throw ConfigError("config: cannot read " + p.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: YAML error: ") + e.what());
    }
    try {
        return parse_config(root);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline ScenarioConfig parse_config_string(const std::string& text) {
    try {
        return parse_config(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

namespace detail {
inline std::string list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s + "]";
}
}  // namespace detail

// Sections that determine the tables.
inline std::string table_section_yaml(const ScenarioConfig& c, bool with_x0 = false) {
    std::ostringstream o;
    std::vector<double> g, lm, lv;
    for (const auto& v : c.investors) {
        g.push_back(v.gamma);
        lm.push_back(v.lambda_m);
        lv.push_back(v.lambda_v);
    }
    o << "mode: " << c.mode << '\n';
    o << "market:\n";
    o << "  r: " << num(c.market.r) << "\n  sigma: " << num(c.market.sigma) << "\n  mu1: " << num(c.market.mu1)
      << "\n  mu2: " << num(c.market.mu2) << "\n  T: " << num(c.market.T) << "\n  q1: " << num(c.market.q1)
      << "\n  q2: " << num(c.market.q2) << "\n  state: " << c.market.state << '\n';
    o << "investors:\n  count: " << c.investors.size() << "\n  gamma: " << detail::list(g)
      << "\n  lambda_m: " << detail::list(lm) << "\n  lambda_v: " << detail::list(lv) << '\n';
    if (with_x0) o << "  initial_wealth: " << detail::list(c.x0) << '\n';
    o << "tables:\n  n_t: " << c.table_grid.n_t << "\n  n_p: " << c.table_grid.n_p
      << "\n  p_min: " << num(c.table_grid.p_min) << "\n  p_max: " << num(c.table_grid.p_max)
      << "\n  paths_c: " << c.mc.paths_c << "\n  paths_dc: " << c.mc.paths_dc << "\n  dt: " << num(c.mc.dt)
      << "\n  seed: " << c.mc.seed << "\n  fd_space_nodes: " << c.fd.space_nodes
      << "\n  fd_time_steps: " << c.fd.time_steps << "\n  source_variant: " << to_string(c.variant) << '\n';
    return o.str();
}

// Resolved config with every default explicit; loadable as a config.
inline std::string manifest_yaml(const ScenarioConfig& c, bool with_output = true) {
    std::ostringstream o;
    o << table_section_yaml(c, true);
    o << "  cache_dir: \"" << c.cache_dir << "\"\n";
    o << "strategy: " << to_string(c.strategy) << '\n';
    o << "prior: " << num(c.prior) << '\n';
    o << "simulation:\n  n_steps: " << c.n_steps << "\n  realizations: " << c.realizations << "\n  seed: " << c.seed
      << "\n  path_stride: " << c.path_stride << '\n';
    if (with_output) o << "output:\n  dir: \"" << c.output_dir << "\"\n";
    return o.str();
}

inline std::string table_hash(const ScenarioConfig& c) { return hex64(fnv1a(table_section_yaml(c))); }

inline std::string params_hash(const ScenarioConfig& c) {
    std::string s = manifest_yaml(c, false);
    // cache location does not change results
    auto pos = s.find("  cache_dir:");
    s.erase(pos, s.find('\n', pos) - pos + 1);
    return hex64(fnv1a(s));
}

}  // namespace mvg

#endif
