#include <gtest/gtest.h>

#include "mvgame/core_model.hpp"

using namespace mvg;

namespace {

std::vector<InvestorParams> fig1_investors() {
    std::vector<InvestorParams> v;
    for (int i = 1; i <= 10; ++i) v.push_back({8 + 0.1 * i, 0.5, 0.5});
    return v;
}

MarketParams fig1_market() { return MarketParams{0.05, 0.1, 0.2, 0.02, 0, 0, 10, DriftMode::ConstantUnknown, 1}; }

}  // namespace

TEST(Coefficients, EqualWeightsGiveInverseRiskAversion) {
    const auto c = compute_coefficients(fig1_investors());
    for (int i = 1; i <= 10; ++i) EXPECT_NEAR(c.kappa[i - 1], 1.0 / (8 + 0.1 * i), 1e-15);
}

TEST(Coefficients, FigureOneValues) {
    const auto c = compute_coefficients(fig1_investors());
    EXPECT_NEAR(c.kappa[0], 0.123457, 5e-7);
    EXPECT_NEAR(c.kappa_bar, 0.117091, 5e-7);
    EXPECT_DOUBLE_EQ(c.lambda_v_bar, 0.5);
    EXPECT_EQ(c.N, 10u);
    for (double w : c.weight) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(Coefficients, SingleInvestor) {
    const auto c = compute_coefficients({{2.0, 0.5, 0.5}});
    EXPECT_DOUBLE_EQ(c.kappa[0], 0.5);
    EXPECT_DOUBLE_EQ(c.kappa_bar, 0.5);
    EXPECT_DOUBLE_EQ(c.lambda_v_bar, 0.5);
}

TEST(Coefficients, GeneralFormula) {
    const auto c = compute_coefficients({{2.0, 0.3, 0.6}, {4.0, 0.8, 0.1}});
    EXPECT_NEAR(c.kappa[0], (1 - 0.3 / 2) / (2.0 * (1 - 0.6 / 2)), 1e-15);
    EXPECT_NEAR(c.kappa[1], (1 - 0.8 / 2) / (4.0 * (1 - 0.1 / 2)), 1e-15);
    EXPECT_NEAR(c.kappa_bar, 0.5 * (c.kappa[0] + c.kappa[1]), 1e-15);
    EXPECT_NEAR(c.lambda_v_bar, 0.35, 1e-15);
    for (double k : c.kappa) EXPECT_GT(k, 0.0);
}

TEST(Coefficients, Rejections) {
    EXPECT_THROW(compute_coefficients({}), ConfigError);
    EXPECT_THROW(compute_coefficients({{0.0, 0.5, 0.5}}), ConfigError);
    EXPECT_THROW(compute_coefficients({{1.0, 0.0, 0.5}}), ConfigError);
    EXPECT_THROW(compute_coefficients({{1.0, 1.0, 0.5}}), ConfigError);
    EXPECT_THROW(compute_coefficients({{1.0, 0.5, 1.0}}), ConfigError);
    EXPECT_THROW(compute_coefficients({{1.0, 0.5, -0.1}}), ConfigError);
    // lambda_v = 0 is admitted
    EXPECT_NO_THROW(compute_coefficients({{1.0, 0.5, 0.0}}));
}

TEST(ModelFunctions, FigureOneAtHalf) {
    const auto f = model_functions(0.5, fig1_market());
    EXPECT_NEAR(f.theta, 0.11, 1e-15);
    EXPECT_NEAR(f.beta, 0.45, 1e-15);
    EXPECT_EQ(f.eta, 0.0);
}

TEST(ModelFunctions, AlternatingFixedPoint) {
    auto m = fig1_market();
    m.mode = DriftMode::Alternating;
    m.q1 = m.q2 = 10;
    EXPECT_EQ(model_functions(0.5, m).eta, 0.0);
    m.q1 = 3;
    m.q2 = 7;
    EXPECT_NEAR(m.eta(m.q2 / (m.q1 + m.q2)), 0.0, 1e-15);
    EXPECT_NEAR(m.eta(0.2), -(10) * 0.2 + 7, 1e-15);
}

TEST(ModelFunctions, RejectsOutOfRange) {
    EXPECT_THROW(model_functions(-0.01, fig1_market()), std::invalid_argument);
    EXPECT_THROW(model_functions(1.01, fig1_market()), std::invalid_argument);
    EXPECT_NO_THROW(model_functions(0.0, fig1_market()));
    EXPECT_NO_THROW(model_functions(1.0, fig1_market()));
}

TEST(ModelFunctions, ShapeProperties) {
    const auto m = fig1_market();
    EXPECT_EQ(m.beta(0.0), 0.0);
    EXPECT_EQ(m.beta(1.0), 0.0);
    double prev_theta = m.theta(0.0);
    for (int k = 0; k <= 100; ++k) {
        const double p = k / 100.0;
        EXPECT_GE(m.beta(p), 0.0);
        EXPECT_LE(m.beta(p), m.beta(0.5));
        EXPECT_GE(m.theta(p), m.mu2 - 1e-15);
        EXPECT_LE(m.theta(p), m.mu1 + 1e-15);
        EXPECT_GE(m.theta(p), prev_theta);
        prev_theta = m.theta(p);
    }
}

TEST(ModelFunctions, DerivativesMatchFiniteDifferences) {
    auto m = fig1_market();
    for (auto mode : {DriftMode::ConstantUnknown, DriftMode::Alternating}) {
        m.mode = mode;
        m.q1 = 10;
        m.q2 = 4;
        for (double p : {0.1, 0.37, 0.5, 0.8}) {
            const double h = 1e-6;
            EXPECT_NEAR(m.Lambda(p), (m.beta(p + h) - m.beta(p - h)) / (2 * h), 1e-7);
            EXPECT_NEAR(m.Gamma(p), (m.q_drift(p + h) - m.q_drift(p - h)) / (2 * h), 1e-6);
        }
    }
}

TEST(MarketParams, FieldLevelValidation) {
    auto expect_field = [](MarketParams m, const std::string& field) {
        try {
            m.validate();
            FAIL() << "no error for " << field;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find("market." + field), std::string::npos) << e.what();
        }
    };
    auto m = fig1_market();
    m.sigma = 0;
    expect_field(m, "sigma");
    m = fig1_market();
    m.T = -1;
    expect_field(m, "T");
    m = fig1_market();
    m.mu1 = 0.01;
    expect_field(m, "mu1");
    m = fig1_market();
    m.mode = DriftMode::Alternating;
    m.q1 = 0;
    m.q2 = 1;
    expect_field(m, "q1");
    m = fig1_market();
    m.state = 3;
    expect_field(m, "state");
}

TEST(Model, ValidatesOnConstruction) {
    auto m = fig1_market();
    m.sigma = -1;
    EXPECT_THROW(Model(m, fig1_investors()), ConfigError);
    const Model ok(fig1_market(), fig1_investors());
    EXPECT_EQ(ok.N(), 10u);
    EXPECT_EQ(ok.T(), 10.0);
}
