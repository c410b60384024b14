#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mvgame/equilibrium.hpp"

using namespace mvg;

namespace {

MarketParams fig1() { return MarketParams{0.05, 0.1, 0.2, 0.02, 0, 0, 10, DriftMode::ConstantUnknown, 1}; }

std::vector<InvestorParams> fig1_investors(std::size_t n = 10) {
    std::vector<InvestorParams> v;
    for (std::size_t i = 1; i <= n; ++i) v.push_back({8 + 0.1 * i, 0.5, 0.5});
    return v;
}

MarketParams fig2() {
    auto m = fig1();
    m.mode = DriftMode::Alternating;
    m.q1 = m.q2 = 10;
    return m;
}

std::vector<InvestorParams> fig2_investors() {
    std::vector<InvestorParams> v;
    for (int i = 1; i <= 10; ++i) v.push_back({0.1 * i, 0.9, 0.9});
    return v;
}

std::vector<double> pis(StrategyKind k, double t, const MarketState& s, const Model& model,
                        const CauchyTable* tab = nullptr) {
    std::vector<StrategyParts> parts(model.N());
    strategy_parts_all(k, t, s, model, tab, parts);
    std::vector<double> out;
    for (const auto& p : parts) out.push_back(p.total());
    return out;
}

}  // namespace

TEST(Strategy, TerminalValueFirstInvestor) {
    const Model model(fig1(), fig1_investors());
    EXPECT_NEAR(strategy_value(StrategyKind::FullInfoConstant, 10.0, MarketState::none(), 0, model), 3.608, 5e-4);
}

TEST(Strategy, ZeroPremiumGivesZero) {
    auto m = fig1();
    m.mu1 = m.mu2 = m.r;
    const Model model(m, fig1_investors());
    for (double v : pis(StrategyKind::FullInfoConstant, 3.0, MarketState::none(), model)) EXPECT_EQ(v, 0.0);
    for (double v : pis(StrategyKind::PartialInfoFirstTermOnly, 3.0, MarketState::posterior(0.4), model))
        EXPECT_EQ(v, 0.0);
}

TEST(Strategy, DiscountFactorization) {
    const Model model(fig1(), fig1_investors());
    for (std::size_t i : {0u, 5u}) {
        const double a = strategy_value(StrategyKind::FullInfoConstant, 2.0, MarketState::none(), i, model);
        const double b = strategy_value(StrategyKind::FullInfoConstant, 7.0, MarketState::none(), i, model);
        EXPECT_NEAR(a / b, std::exp(-0.05 * 5.0), 1e-13);
    }
}

TEST(Strategy, EqualRelativeConcernCollapsesKappa) {
    auto inv = fig1_investors();
    for (auto& v : inv) v.lambda_m = v.lambda_v = 0.3;
    const Model model(fig1(), inv);
    for (std::size_t i = 0; i < inv.size(); ++i) EXPECT_NEAR(model.coef().kappa[i], 1.0 / inv[i].gamma, 1e-15);
}

TEST(Strategy, NoVarianceConcernDecouples) {
    auto inv = fig1_investors();
    for (auto& v : inv) v.lambda_v = 0.0;
    const Model a(fig1(), inv);
    inv[3].gamma = 50;  // others' strategies must not move
    const Model b(fig1(), inv);
    const auto pa = pis(StrategyKind::FullInfoConstant, 1.0, MarketState::none(), a);
    const auto pb = pis(StrategyKind::FullInfoConstant, 1.0, MarketState::none(), b);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (i == 3) continue;
        EXPECT_EQ(pa[i], pb[i]);
    }
}

TEST(Strategy, PartialReducesToFullWhenDriftKnown) {
    auto m = fig1();
    m.mu2 = m.mu1;
    const Model model(m, fig1_investors(4));
    const auto tab = build_tables(model, TableGrid{5, 5, 0.01, 0.99}, McConfig{64, 64, 0.05, 1});
    for (double t : {0.0, 5.0, 9.0})
        for (double p : {0.25, 0.5, 0.75}) {
            const auto full = pis(StrategyKind::FullInfoConstant, t, MarketState::none(), model);
            const auto part = pis(StrategyKind::PartialInfo, t, MarketState::posterior(p), model, &tab);
            for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(part[i], full[i], 1e-12);
        }
}

TEST(Strategy, PartialFirstTermInterpolatesDrift) {
    const Model model(fig1(), fig1_investors());
    const auto hi = pis(StrategyKind::PartialInfoFirstTermOnly, 4.0, MarketState::posterior(1.0), model);
    const auto full = pis(StrategyKind::FullInfoConstant, 4.0, MarketState::none(), model);
    for (std::size_t i = 0; i < hi.size(); ++i) EXPECT_NEAR(hi[i], full[i], 1e-12);
}

TEST(Strategy, StateRequirements) {
    const Model model(fig1(), fig1_investors());
    std::vector<StrategyParts> parts(model.N());
    EXPECT_THROW(strategy_parts_all(StrategyKind::PartialInfo, 0, MarketState::posterior(0.5), model, nullptr, parts),
                 std::invalid_argument);
    EXPECT_THROW(strategy_parts_all(StrategyKind::PartialInfoFirstTermOnly, 0, MarketState::none(), model, nullptr,
                                    parts),
                 std::invalid_argument);
    EXPECT_THROW(strategy_parts_all(StrategyKind::FullInfoMarkov, 0, MarketState::regime(3), model, nullptr, parts),
                 std::invalid_argument);
    EXPECT_THROW(strategy_parts(StrategyKind::FullInfoConstant, 0, MarketState::none(), 10, model),
                 std::invalid_argument);
}

TEST(Aggregate, MeanAndEmpty) {
    const std::vector<double> v{1.0, 2.0, 6.0};
    EXPECT_DOUBLE_EQ(aggregate_strategy(v), 3.0);
    EXPECT_THROW(aggregate_strategy(std::span<const double>{}), std::invalid_argument);
}

TEST(ValueFunction, TerminalIsRelativeWealth) {
    const Model model(fig1(), fig1_investors(3));
    const std::vector<double> x{1.0, 2.0, 4.0};
    const double v = value_function(StrategyKind::FullInfoConstant, 10.0, x, MarketState::none(), 0, model);
    EXPECT_NEAR(v, (1 - 0.5 / 3) * 1.0 - 0.5 * 6.0 / 3, 1e-14);
    EXPECT_THROW(value_function(StrategyKind::FullInfoConstant, 0, std::vector<double>{1, 2}, MarketState::none(), 0,
                                model),
                 std::invalid_argument);
    EXPECT_THROW(value_function(StrategyKind::PartialInfoFirstTermOnly, 0, x, MarketState::posterior(0.5), 0, model),
                 std::invalid_argument);
}

TEST(ValueFunction, ConstantDriftIsLinearInHorizon) {
    const Model model(fig1(), fig1_investors(3));
    const std::vector<double> x{1.0, 1.0, 1.0};
    auto V = [&](double t) {
        return value_function(StrategyKind::FullInfoConstant, t, x, MarketState::none(), 1, model) -
               value_function(StrategyKind::FullInfoConstant, 10.0, x, MarketState::none(), 1, model) *
                   std::exp(0.05 * (10 - t));
    };
    EXPECT_NEAR(V(4.0) / 6.0, V(8.0) / 2.0, 1e-12);
    EXPECT_NEAR(V(4.0) / 6.0, N_const(model, 1, 0.2, SourceVariant::Ansatz), 1e-12);
}

TEST(ValueFunction, MarkovJumpCorrectionVanishesAtTerminal) {
    const Model model(fig2(), fig2_investors());
    EXPECT_EQ(markov_C_with_jumps(10.0, 1, 0, model), 0.0);
    const double tau = 1e-4;
    EXPECT_NEAR(markov_C_with_jumps(10 - tau, 1, 0, model) / tau,
                Q_markov(model, 0, 1, SourceVariant::Ansatz), 1e-2 * std::abs(Q_markov(model, 0, 1, SourceVariant::Ansatz)));
    // Jumps add variance, so C with jumps sits below the jump-free closed form.
    EXPECT_LT(markov_C_with_jumps(0.0, 1, 0, model), closed_form_C_markov(0.0, 1, 0, model, SourceVariant::Ansatz));
}

TEST(Objective, ZeroStrategiesGrowDeterministically) {
    const Model model(fig1(), fig1_investors(3));
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto e = estimate_objective(zero_profile(), 0, 0.0, x, MarketState::none(), model, ObjectiveConfig{200, 100, 4, 1});
    const double g = std::exp(0.05 * 10);
    EXPECT_NEAR(e.mean_term, g * (1 - 0.5 * 2.0), 1e-12);
    EXPECT_NEAR(e.var_term, 0.0, 1e-20);
}

TEST(Objective, VanishingVolatilityIsDeterministic) {
    auto m = fig1();
    m.sigma = 1e-9;
    m.mu1 = m.mu2 = 0.07;
    const Model model(m, fig1_investors(2));
    const std::vector<double> x{1.0, 1.0};
    auto fixed = [](double, const MarketState&, std::span<double> pi) {
        pi[0] = 0.5;
        pi[1] = 0.0;
    };
    const auto e = estimate_objective(fixed, 0, 0.0, x, MarketState::none(), model, ObjectiveConfig{40, 2000, 4, 1});
    // dX = rX + 0.5*(mu-r) dt  =>  X(T) = e^{rT} + 0.5(mu-r)(e^{rT}-1)/r
    const double x0T = std::exp(0.5) + 0.5 * 0.02 * (std::exp(0.5) - 1) / 0.05, x1T = std::exp(0.5);
    EXPECT_NEAR(e.mean_term, x0T - 0.5 * 0.5 * (x0T + x1T), 1e-4);
    EXPECT_LT(e.var_term, 1e-12);
}

TEST(Objective, ZeroPerturbationDifferenceIsExactlyZero) {
    const Model model(fig1(), fig1_investors(3));
    const std::vector<double> x{1.0, 1.0, 1.0};
    const auto base = equilibrium_profile(StrategyKind::FullInfoConstant, model);
    const auto run = run_objective({base, perturbed_profile(base, 1, 0.0, 1.0, 0.0)}, 0.0, x, MarketState::none(),
                                   model, ObjectiveConfig{400, 200, 4, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        const auto d = run.difference(1, 0, i);
        EXPECT_EQ(d.value, 0.0);
        EXPECT_EQ(d.se, 0.0);
    }
}

TEST(Objective, MatchesValueFunctionFullInfo) {
    const Model model(fig1(), fig1_investors(3));
    const std::vector<double> x{1.0, 1.0, 1.0};
    const auto e = estimate_objective(equilibrium_profile(StrategyKind::FullInfoConstant, model), 0, 5.0, x,
                                      MarketState::none(), model, ObjectiveConfig{20000, 500, 20, 5});
    const double V = value_function(StrategyKind::FullInfoConstant, 5.0, x, MarketState::none(), 0, model);
    EXPECT_NEAR(e.J, V, std::max(3 * e.se_J, 1e-3 * std::abs(V)));
}

TEST(Objective, RejectsBadConfig) {
    const Model model(fig1(), fig1_investors(2));
    const std::vector<double> x{1.0, 1.0};
    EXPECT_THROW(estimate_objective(zero_profile(), 0, 0.0, x, MarketState::none(), model, ObjectiveConfig{10, 10, 1, 1}),
                 std::invalid_argument);
    EXPECT_THROW(estimate_objective(zero_profile(), 0, 0.0, x, MarketState::regime(1), model, ObjectiveConfig{}),
                 std::invalid_argument);
    EXPECT_THROW(estimate_objective(zero_profile(), 2, 0.0, x, MarketState::none(), model, ObjectiveConfig{}),
                 std::invalid_argument);
}

TEST(IntraEquilibrium, EquilibriumHoldsAndMertonDeviates) {
    const Model model(fig1(), fig1_investors(4));
    const std::vector<double> x{1.0, 1.0, 1.0, 1.0};
    const ObjectiveConfig cfg{20000, 400, 20, 9};
    const auto eq = intra_equilibrium_test(0, equilibrium_profile(StrategyKind::FullInfoConstant, model), 0.0, x,
                                           MarketState::none(), {0.1}, {-1.0, 1.0}, model, cfg);
    EXPECT_TRUE(eq.pass);
    EXPECT_EQ(eq.entries.size(), 2u);
    const auto me = intra_equilibrium_test(0, merton_profile(model), 0.0, x, MarketState::none(), {0.1}, {-1.0, 1.0},
                                           model, cfg);
    EXPECT_FALSE(me.pass);
}
