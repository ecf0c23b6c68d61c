#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rankfolio/linalg.hpp"

namespace rankfolio {

// First-order model: constant per-rank drift vector and volatility matrix.
struct FirstOrderParams {
    int d = 0;
    Vector mu_tilde;     // per-rank drift rates, 1/year
    Matrix sigma_tilde;  // d x d volatility, 1/sqrt(year); symmetric positive definite
    double r = 0.0;      // risk-free rate, 1/year

    Matrix a_tilde() const;  // sigma sigma^T
};

// Rank-based coefficients as user-supplied evaluators of (t, ordered y),
// with the bounds the user claims they satisfy. Evaluators must be pure.
struct RankCoefficients {
    int d = 0;
    std::function<Vector(double, const Vector&)> mu_fn;
    std::function<Matrix(double, const Vector&)> sigma_fn;
    double drift_bound = 0.0;        // sup_k |mu_k|
    double vol_bound = 0.0;          // Frobenius bound on sigma
    double ellipticity_floor = 0.0;  // lower bound on lambda_min(sigma sigma^T)
    double lipschitz_bound = 0.0;    // L bounding ||y1*mu(t,y1)-y2*mu(t,y2)|| + ||diag(y1)s1-diag(y2)s2||_F over ||y1-y2||
};

struct Preferences {
    double gamma = 2.0;    // relative risk aversion, > 0 and != 1
    double beta = 0.1;     // patience rate, 1/year, > 0
    double horizon = 1.0;  // T, years, > 0

    void require_valid() const;  // throws std::invalid_argument
};

// Power utility w^{1-gamma}/(1-gamma); U(0) is 0 for gamma < 1 and -inf for gamma > 1.
double power_utility(double w, double gamma);

enum class ConstraintKind { Unconstrained, OpenMarket, FullyInvestedOpen };

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::Unconstrained;
    int lo = 1;  // n, 1-based best rank of the window
    int hi = 1;  // N, 1-based worst rank of the window

    static ConstraintSpec unconstrained() { return {ConstraintKind::Unconstrained, 1, 1}; }
    static ConstraintSpec open_market(int n, int big_n) {
        return {ConstraintKind::OpenMarket, n, big_n};
    }
    static ConstraintSpec fully_invested_open(int n, int big_n) {
        return {ConstraintKind::FullyInvestedOpen, n, big_n};
    }
    int window_size() const { return hi - lo + 1; }
    void require_valid(int d) const;  // throws when the window leaves [1, d]
};

struct MarketState {
    double t = 0.0;  // years
    Vector x;        // strictly positive named capitalizations
    double w = 1.0;  // wealth, > 0

    void require_valid() const;
};

// rank_of: descending sort with ties broken by asset index, so the rank
// map is always a bijection.
struct Ranking {
    std::vector<int> rank_of_asset;  // 0-based: asset i occupies rank rank_of_asset[i]
    std::vector<int> asset_at_rank;  // 0-based inverse
    Vector sorted;                   // x in descending order
};

Ranking rank_of(std::span<const double> x);  // throws std::domain_error on bad entries

// In-place variant for hot loops; buffers must be sized d. No validation.
void rank_into(std::span<const double> x, std::span<int> rank_of_asset,
               std::span<int> asset_at_rank, std::span<double> sorted);

struct NamedCoefficients {
    Vector mu;     // mu_i = mu_tilde[rank(i)]
    Matrix sigma;  // sigma_ij = sigma_tilde[rank(i)][rank(j)]
};

NamedCoefficients named_coefficients(double t, std::span<const double> x,
                                     const FirstOrderParams& model);
NamedCoefficients named_coefficients(double t, std::span<const double> x,
                                     const RankCoefficients& model);

// Feedback control: fills the named portfolio weights for state (t, x, w)
// and the consumption rate. pi_out has size d. Must be pure and callable
// from concurrent workers.
using StrategyFn = std::function<void(double t, std::span<const double> x, double w,
                                      std::span<double> pi_out, double& consumption_out)>;

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double value = 0.0;
};

struct ValidationReport {
    bool passed = false;
    std::vector<CheckResult> checks;
    std::string note;
    double min_eigenvalue = 0.0;
    double worst_lipschitz_ratio = 0.0;
};

// Exact structural checks: shapes, finiteness, symmetry, positive
// definiteness via Cholesky, smallest eigenvalue via Jacobi.
ValidationReport validate(const FirstOrderParams& model);

struct ProbeConfig {
    int n_samples = 256;
    std::uint64_t seed = 0x5EEDULL;
    double t_max = 1.0;
    double y_scale = 1.0;
};

// Sampled probe of the declared bounds and the Lipschitz condition on
// random ordered pairs (including nearby pairs and pairs shrinking toward
// the origin). Passing is necessary, not sufficient, and the report says so.
ValidationReport validate(const RankCoefficients& model, const ProbeConfig& probe = {});

}  // namespace rankfolio
