#ifndef MVGAME_CORE_MODEL_HPP
#define MVGAME_CORE_MODEL_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvg {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DriftMode { ConstantUnknown, Alternating };

inline const char* to_string(DriftMode m) {
    return m == DriftMode::ConstantUnknown ? "constant" : "alternating";
}

// state: the true drift index in constant mode, the initial chain state in
// alternating mode. Both are 1 (mu1) or 2 (mu2).
struct MarketParams {
    double r = 0.05;
    double sigma = 0.1;
    double mu1 = 0.2;
    double mu2 = 0.02;
    double q1 = 0.0;
    double q2 = 0.0;
    double T = 10.0;
    DriftMode mode = DriftMode::ConstantUnknown;
    int state = 1;

    void validate() const {
        auto bad = [](const std::string& f, const std::string& why) {
            throw ConfigError("market." + f + ": " + why);
        };
        if (!std::isfinite(r)) bad("r", "must be finite");
        if (!(sigma > 0) || !std::isfinite(sigma)) bad("sigma", "must be > 0");
        if (!std::isfinite(mu1) || !std::isfinite(mu2)) bad("mu1", "must be finite");
        if (!(mu1 >= mu2)) bad("mu1", "must be >= mu2");
        if (!(T > 0) || !std::isfinite(T)) bad("T", "must be > 0");
        if (state != 1 && state != 2) bad("state", "must be 1 or 2");
        if (mode == DriftMode::Alternating) {
            if (!(q1 > 0)) bad("q1", "must be > 0 in alternating mode");
            if (!(q2 > 0)) bad("q2", "must be > 0 in alternating mode");
        }
    }

    bool alternating() const { return mode == DriftMode::Alternating; }
    double mu(int m) const { return m == 1 ? mu1 : mu2; }
    double dmu() const { return mu1 - mu2; }

    // Unchecked scalar functions for inner loops.
    double theta(double p) const { return (mu1 - mu2) * p + mu2; }
    double beta(double p) const { return (mu1 - mu2) / sigma * p * (1.0 - p); }
    double eta(double p) const { return alternating() ? -(q1 + q2) * p + q2 : 0.0; }
    double eta_prime() const { return alternating() ? -(q1 + q2) : 0.0; }
    // beta'(p)
    double Lambda(double p) const { return (mu1 - mu2) / sigma * (1.0 - 2.0 * p); }
    // market price of risk under the filter
    double mpr(double p) const { return (theta(p) - r) / sigma; }
    double q_drift(double p) const { return eta(p) - beta(p) * mpr(p); }
    // d/dp of q_drift
    double Gamma(double p) const {
        return eta_prime() - (Lambda(p) * (theta(p) - r) + beta(p) * (mu1 - mu2)) / sigma;
    }
};

struct ModelFunctions {
    double theta;
    double beta;
    double eta;
};

inline ModelFunctions model_functions(double p, const MarketParams& m) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("model_functions: p outside [0,1]");
    return {m.theta(p), m.beta(p), m.eta(p)};
}

struct InvestorParams {
    double gamma = 1.0;
    double lambda_m = 0.5;
    double lambda_v = 0.5;

    void validate(std::size_t idx) const {
        std::string at = "investors[" + std::to_string(idx) + "].";
        if (!(gamma > 0) || !std::isfinite(gamma)) throw ConfigError(at + "gamma: must be > 0");
        if (!(lambda_m > 0 && lambda_m < 1)) throw ConfigError(at + "lambda_m: must lie in (0,1)");
        if (!(lambda_v >= 0 && lambda_v < 1)) throw ConfigError(at + "lambda_v: must lie in [0,1)");
    }
};

struct EquilibriumCoefficients {
    std::vector<double> kappa;
    double kappa_bar = 0;
    double lambda_v_bar = 0;
    std::size_t N = 0;
    // lambda_v_i / (1 - lambda_v_bar)
    std::vector<double> weight;
};

inline EquilibriumCoefficients compute_coefficients(const std::vector<InvestorParams>& inv) {
    if (inv.empty()) throw ConfigError("investors: need at least one investor");
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i].validate(i);
    EquilibriumCoefficients c;
    c.N = inv.size();
    const double n = static_cast<double>(c.N);
    double ks = 0, ls = 0;
    for (const auto& v : inv) {
        double k = (1.0 - v.lambda_m / n) / (v.gamma * (1.0 - v.lambda_v / n));
        c.kappa.push_back(k);
        ks += k;
        ls += v.lambda_v;
    }
    c.kappa_bar = ks / n;
    c.lambda_v_bar = ls / n;
    if (!(c.lambda_v_bar < 1)) throw ConfigError("investors: mean lambda_v must be < 1");
    for (const auto& v : inv) c.weight.push_back(v.lambda_v / (1.0 - c.lambda_v_bar));
    return c;
}

// Validated bundle of everything the solvers need.
class Model {
public:
    Model(MarketParams m, std::vector<InvestorParams> inv)
        : market_(m), investors_(std::move(inv)) {
        market_.validate();
        coef_ = compute_coefficients(investors_);
    }

    const MarketParams& market() const { return market_; }
    const std::vector<InvestorParams>& investors() const { return investors_; }
    const EquilibriumCoefficients& coef() const { return coef_; }
    std::size_t N() const { return coef_.N; }
    double T() const { return market_.T; }

private:
    MarketParams market_;
    std::vector<InvestorParams> investors_;
    EquilibriumCoefficients coef_;
};

}  // namespace mvg

#endif
