#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mvgame/filtering.hpp"
#include "mvgame/stats.hpp"

using namespace mvg;

namespace {

MarketParams fig1() { return MarketParams{0.05, 0.1, 0.2, 0.02, 0, 0, 10, DriftMode::ConstantUnknown, 1}; }

MarketParams fig2() {
    auto m = fig1();
    m.mode = DriftMode::Alternating;
    m.q1 = m.q2 = 10;
    return m;
}

double max_dev(const PosteriorPath& a, const PosteriorPath& b) {
    double d = 0;
    for (std::size_t k = 0; k < a.P.size(); ++k) d = std::max(d, std::abs(a.P[k] - b.P[k]));
    return d;
}

}  // namespace

TEST(ClosedForm, DegenerateDriftKeepsPrior) {
    auto m = fig1();
    m.mu2 = m.mu1;
    const TimeGrid g(0.0, 10.0, 500);
    const auto tr = simulate_truth(m, g, 4);
    for (double p : posterior_closed_form(tr.log_returns, g, 0.3, m).P) ASSERT_EQ(p, 0.3);
    for (double p : posterior_from_log_returns(tr.log_returns, 0.3, m, g).P) ASSERT_EQ(p, 0.3);
}

TEST(ClosedForm, DegeneratePrior) {
    const TimeGrid g(0.0, 10.0, 500);
    const auto tr = simulate_truth(fig1(), g, 4);
    for (double p : posterior_closed_form(tr.log_returns, g, 1.0, fig1()).P) ASSERT_EQ(p, 1.0);
    for (double p : posterior_closed_form(tr.log_returns, g, 0.0, fig1()).P) ASSERT_EQ(p, 0.0);
}

TEST(ClosedForm, RejectsAlternatingMode) {
    const TimeGrid g(0.0, 1.0, 10);
    std::vector<double> lr(10, 0.0);
    EXPECT_THROW(posterior_closed_form(lr, g, 0.5, fig2()), std::invalid_argument);
    EXPECT_THROW(posterior_closed_form(lr, g, 1.5, fig1()), std::invalid_argument);
}

TEST(Observations, RejectsNonpositivePrices) {
    const TimeGrid g(0.0, 1.0, 3);
    std::vector<double> s{1.0, 1.1, 0.0, 1.2};
    EXPECT_THROW(posterior_from_observations(s, 0.5, fig1(), g), std::invalid_argument);
    s[2] = -1;
    EXPECT_THROW(posterior_from_observations(s, 0.5, fig1(), g), std::invalid_argument);
    s[2] = 1.05;
    EXPECT_NO_THROW(posterior_from_observations(s, 0.5, fig1(), g));
}

TEST(Observations, AgreesWithClosedFormAndConverges) {
    auto m = fig1();
    m.T = 1;
    const TimeGrid fine(0.0, 1.0, 10000), coarse(0.0, 1.0, 5000);
    double mf = 0, mc = 0;
    for (std::size_t j = 0; j < 10; ++j) {
        const auto tr = simulate_truth(m, fine, 8, j);
        const auto sde = posterior_from_observations(tr.S, 0.5, m, fine);
        const double d = max_dev(sde, posterior_closed_form(tr.log_returns, fine, 0.5, m));
        EXPECT_LE(d, 1e-2);
        mf += d;
        std::vector<double> lr(5000);
        for (std::size_t k = 0; k < 5000; ++k) lr[k] = tr.log_returns[2 * k] + tr.log_returns[2 * k + 1];
        mc += max_dev(posterior_from_log_returns(lr, 0.5, m, coarse), posterior_closed_form(lr, coarse, 0.5, m));
    }
    EXPECT_LT(mf, mc);
}

TEST(Observations, AlternatingStaysNearHalf) {
    const auto m = fig2();
    const TimeGrid g(0.0, 10.0, 10000);
    for (std::size_t j = 0; j < 5; ++j) {
        const auto tr = simulate_truth(m, g, 15, j);
        const auto post = posterior_from_observations(tr.S, 0.5, m, g);
        std::size_t in = 0;
        for (double p : post.P) in += p >= 0.3 && p <= 0.7;
        EXPECT_GE(double(in) / post.P.size(), 0.6);
    }
}

TEST(Observations, LearningImprovesWithHorizon) {
    auto frac = [](int state, double T) {
        auto m = fig1();
        m.state = state;
        m.T = T;
        const TimeGrid g(0.0, T, static_cast<std::size_t>(T * 100));
        int hit = 0;
        for (std::size_t j = 0; j < 200; ++j) {
            const auto tr = simulate_truth(m, g, 16, j);
            const double p = posterior_from_log_returns(tr.log_returns, 0.5, m, g).P.back();
            hit += state == 1 ? p > 0.99 : p < 0.01;
        }
        return hit / 200.0;
    };
    EXPECT_LT(frac(1, 5), frac(1, 30));
    EXPECT_LT(frac(2, 5), frac(2, 30));
    EXPECT_GE(frac(1, 30), 0.9);
}

TEST(Observations, InnovationsAreBrownian) {
    // Brownian under the Bayesian mixture: the true initial state is drawn
    // from the prior, here exactly half the paths in each state.
    for (auto m : {fig1(), fig2()}) {
        const TimeGrid g(0.0, 10.0, 10000);
        Accumulator mean, sq;
        for (std::size_t j = 0; j < 400; ++j) {
            m.state = j % 2 ? 2 : 1;
            const auto tr = simulate_truth(m, g, 23, j);
            for (double w : posterior_from_log_returns(tr.log_returns, 0.5, m, g).innovations) {
                mean.add(w);
                sq.add(w * w);
            }
        }
        EXPECT_NEAR(mean.mean(), 0.0, 3 * mean.se());
        EXPECT_NEAR(sq.mean(), g.dt(), 3 * sq.se());
    }
}

TEST(Truth, DeterministicLimitAndReproducibility) {
    auto m = fig1();
    m.sigma = 1e-12;
    const TimeGrid g(0.0, 10.0, 100);
    const auto tr = simulate_truth(m, g, 3);
    EXPECT_NEAR(tr.S.back(), std::exp(m.mu1 * m.T), 1e-9);
    const auto a = simulate_truth(fig1(), g, 3, 2), b = simulate_truth(fig1(), g, 3, 2);
    EXPECT_EQ(a.S, b.S);
    EXPECT_NE(a.S, simulate_truth(fig1(), g, 3, 1).S);
    for (double s : a.S) ASSERT_GT(s, 0.0);
}

TEST(Truth, ExpectedTerminalPrice) {
    auto m = fig1();
    m.T = 1;
    const TimeGrid g(0.0, 1.0, 10);
    Accumulator a;
    for (std::size_t j = 0; j < 100000; ++j) a.add(simulate_truth(m, g, 9, j).S.back());
    EXPECT_NEAR(a.mean(), std::exp(m.mu1), 3 * a.se());
}

TEST(Truth, AlternatingDriftFollowsChain) {
    const auto m = fig2();
    const TimeGrid g(0.0, 10.0, 1000);
    const auto tr = simulate_truth(m, g, 3);
    ASSERT_EQ(tr.chain.state.size(), g.n_steps + 1);
    for (std::size_t k = 0; k < g.n_steps; ++k) ASSERT_EQ(tr.mu[k], m.mu(tr.chain.state[k]));
}

TEST(PosteriorCsv, Schema) {
    const TimeGrid g(0.0, 1.0, 4);
    const auto tr = simulate_truth(fig1(), g, 1);
    std::ostringstream os;
    write_posterior_csv(os, posterior_from_log_returns(tr.log_returns, 0.5, fig1(), g));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t,P,innovation_increment");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 5);
}
