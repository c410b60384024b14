#include <gtest/gtest.h>

#include <string>

#include "mvgame/config.hpp"
#include "mvgame/verify.hpp"

using namespace mvg;

#ifndef MVGAME_SOURCE_DIR
#define MVGAME_SOURCE_DIR "."
#endif

namespace {

const char* kMinimal = R"(
mode: constant-partial
market: {r: 0.05, sigma: 0.1, mu1: 0.2, mu2: 0.02, T: 10}
investors: {count: 4, gamma: "8 + 0.1*i", lambda_m: 0.5, lambda_v: [0.1, 0.2, 0.3, 0.4]}
)";

std::string without(const std::string& text, const std::string& needle) {
    std::string s = text;
    s.erase(s.find(needle), needle.size());
    return s;
}

std::string error_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, MinimalWithDefaults) {
    const auto c = parse_config_string(kMinimal);
    ASSERT_EQ(c.investors.size(), 4u);
    EXPECT_DOUBLE_EQ(c.investors[0].gamma, 8.1);
    EXPECT_DOUBLE_EQ(c.investors[3].gamma, 8.4);
    EXPECT_DOUBLE_EQ(c.investors[2].lambda_v, 0.3);
    EXPECT_EQ(c.x0, std::vector<double>(4, 1.0));
    EXPECT_EQ(c.info(), Information::Partial);
    EXPECT_TRUE(c.needs_table());
    EXPECT_EQ(c.market.mode, DriftMode::ConstantUnknown);
}

TEST(Config, AffineExpressions) {
    EXPECT_EQ(detail::affine_series("0.1*i", 3, "f"), (std::vector<double>{0.1, 0.2, 0.30000000000000004}));
    EXPECT_EQ(detail::affine_series("i*2 - 1", 2, "f"), (std::vector<double>{1.0, 3.0}));
    EXPECT_EQ(detail::affine_series("1e-1 + i", 1, "f"), (std::vector<double>{1.1}));
    EXPECT_THROW(detail::affine_series("i*i", 2, "f"), ConfigError);
    EXPECT_THROW(detail::affine_series("", 2, "f"), ConfigError);
}

TEST(Config, FieldLevelErrors) {
    EXPECT_NE(error_of(without(kMinimal, "sigma: 0.1, ")).find("market.sigma"), std::string::npos);
    EXPECT_NE(error_of(without(kMinimal, "mode: constant-partial") + "mode: sideways\n").find("mode"),
              std::string::npos);
    const std::string bad_lv = R"(
market: {r: 0.05, sigma: 0.1, mu1: 0.2, mu2: 0.02, T: 10}
investors: {count: 2, gamma: 1, lambda_m: 0.5, lambda_v: [0.5]}
)";
    EXPECT_NE(error_of(bad_lv).find("investors.lambda_v"), std::string::npos);
    const std::string markov = R"(
mode: markov-full
market: {r: 0.05, sigma: 0.1, mu1: 0.2, mu2: 0.02, T: 10, q1: 1}
investors: {count: 1, gamma: 1, lambda_m: 0.5, lambda_v: 0.5}
)";
    EXPECT_NE(error_of(markov).find("market.q2"), std::string::npos);
    EXPECT_NE(error_of(std::string(kMinimal) + "simulation: {n_steps: -3}\n").find("simulation.n_steps"),
              std::string::npos);
    EXPECT_NE(error_of(std::string(kMinimal) + "tables: {p_min: 0.001}\n").find("tables"), std::string::npos);
    EXPECT_NE(error_of(std::string(kMinimal) + "tables: {source_variant: other}\n").find("source variant"),
              std::string::npos);
    EXPECT_NE(error_of(std::string(kMinimal) + "prior: 1\n").find("prior"), std::string::npos);
    EXPECT_THROW(load_config("/nonexistent/config.yaml"), ConfigError);
}

TEST(Config, FirstTermOnlyNeedsPartialInformation) {
    const std::string s = without(kMinimal, "mode: constant-partial") + "mode: constant-full\nstrategy: first-term-only\n";
    EXPECT_NE(error_of(s).find("strategy"), std::string::npos);
}

TEST(Config, ManifestRoundTrip) {
    auto c = parse_config_string(std::string(kMinimal) + "simulation: {seed: 99, path_stride: 3}\nprior: 0.4\n");
    c.cache_dir = "/tmp/somewhere";
    const auto back = parse_config_string(manifest_yaml(c));
    EXPECT_EQ(params_hash(back), params_hash(c));
    EXPECT_EQ(table_hash(back), table_hash(c));
    EXPECT_EQ(back.x0, c.x0);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.cache_dir, c.cache_dir);
    EXPECT_EQ(manifest_yaml(back), manifest_yaml(c));
}

TEST(Config, HashesTrackRelevantFields) {
    const auto a = parse_config_string(kMinimal);
    auto b = a;
    b.seed = a.seed + 1;
    EXPECT_NE(params_hash(a), params_hash(b));
    EXPECT_EQ(table_hash(a), table_hash(b));
    b.mc.paths_c += 1;
    EXPECT_NE(table_hash(a), table_hash(b));
    auto c = a;
    c.cache_dir = "elsewhere";
    c.output_dir = "other";
    EXPECT_EQ(params_hash(a), params_hash(c));
}

TEST(Config, ShippedScenariosMatchReferenceConfigs) {
    const std::string dir = std::string(MVGAME_SOURCE_DIR) + "/scenarios/";
    EXPECT_EQ(params_hash(load_config(dir + "fig1.yaml")), params_hash(figure1_config()));
    EXPECT_EQ(params_hash(load_config(dir + "fig2.yaml")), params_hash(figure2_config()));
    EXPECT_NO_THROW(load_config(dir + "smoke.yaml"));
}
