#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rankfolio/verify.hpp"

using namespace rankfolio;

namespace {

FirstOrderParams bench_model() {
    FirstOrderParams m;
    m.d = 3;
    m.mu_tilde = {0.09, 0.05, 0.01};
    m.sigma_tilde = Matrix(3, 3);
    for (int i = 0; i < 3; ++i) m.sigma_tilde(i, i) = 0.2;
    m.r = 0.02;
    return m;
}

const Preferences kPrefs{2.0, 0.1, 1.0};

SimConfig mc_cfg(std::int64_t paths, int steps, std::uint64_t seed) {
    SimConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.t1 = 1.0;
    c.master_seed = seed;
    return c;
}

}  // namespace

TEST_CASE("mc_value of the do-nothing strategy is the deterministic risk-free utility") {
    FirstOrderParams m = bench_model();
    Preferences p{0.5, 0.1, 1.0};  // gamma < 1 so zero consumption has zero utility
    const StrategyFn zero = [](double, std::span<const double>, double, std::span<double> pi,
                               double& c) {
        std::fill(pi.begin(), pi.end(), 0.0);
        c = 0.0;
    };
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    const ValueEstimate est = mc_value(m, p, zero, st, mc_cfg(64, 200, 5));
    CHECK(est.stderr_ <= 1e-12);  // identical paths: no MC noise
    CHECK(est.n_inadmissible == 0);
    CHECK(est.mean == doctest::Approx(power_utility(std::exp(0.02), 0.5)).epsilon(2e-4));
}

TEST_CASE("mc_value with proportional consumption matches the deterministic ODE value") {
    FirstOrderParams m = bench_model();
    Preferences p{0.5, 0.1, 1.0};
    const double rho = 0.4;
    const StrategyFn drain = [rho](double, std::span<const double>, double w, std::span<double> pi,
                                   double& c) {
        std::fill(pi.begin(), pi.end(), 0.0);
        c = rho * w;
    };
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    const ValueEstimate est = mc_value(m, p, drain, st, mc_cfg(16, 400, 7));
    // scalar oracle: w(t) = e^{(r-rho)t}; J = int_0^1 e^{-bs} U(rho w(s)) ds + U(w(1))
    const int n = 4001;
    double acc = 0.0;
    const double h = 1.0 / (n - 1);
    auto integrand = [&](double s) {
        return std::exp(-p.beta * s) * power_utility(rho * std::exp((0.02 - rho) * s), p.gamma);
    };
    for (int i = 0; i < n - 1; i += 2)
        acc += integrand(i * h) + 4.0 * integrand((i + 1) * h) + integrand((i + 2) * h);
    const double oracle = acc * h / 3.0 + power_utility(std::exp(0.02 - rho), p.gamma);
    CHECK(est.mean == doctest::Approx(oracle).epsilon(5e-4));
}

TEST_CASE("mc_value is invariant to the worker count") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const StrategyFn strat = feedback_strategy(sol);
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    SimConfig c1 = mc_cfg(3000, 50, 11);
    c1.threads = 1;
    SimConfig c4 = c1;
    c4.threads = 4;
    const ValueEstimate a = mc_value(m, kPrefs, strat, st, c1);
    const ValueEstimate b = mc_value(m, kPrefs, strat, st, c4);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_ == b.stderr_);
    CHECK(a.fingerprint == b.fingerprint);
}

TEST_CASE("hjb residual of the closed form vanishes in all regimes and both gamma sides") {
    FirstOrderParams m = bench_model();
    for (double gamma : {0.5, 2.0, 5.0}) {
        Preferences p{gamma, 0.1, 1.0};
        for (auto c : {ConstraintSpec::unconstrained(), ConstraintSpec::open_market(1, 2),
                       ConstraintSpec::fully_invested_open(1, 3)}) {
            const ClosedFormSolution sol = solve_closed_form(m, p, c);
            const ResidualReport rep = hjb_residual(sol, m);
            CHECK(rep.max_normalized_residual < 1e-6);
            CHECK(rep.terminal_gap == 0.0);
            CHECK(rep.maximizer_improvement < 1e-9);
        }
    }
}

TEST_CASE("perturbing f pushes the residual well away from zero") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const ResidualReport rep = hjb_residual(sol, m, {}, 1.1, false);
    CHECK(rep.max_normalized_residual > 1e-3);
}

TEST_CASE("neumann check: exact zero for y-independent candidates, 2e for linear probes") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const auto samples = make_boundary_samples(3, 24, 1.0, 71);

    const CandidateFn closed = [&](double t, const Vector&, double w) {
        return value_closed_form(t, w, sol);
    };
    CHECK(neumann_check(closed, samples) == 0.0);

    const double eps = 1e-3;
    const CandidateFn probe = [&](double t, const Vector& y, double w) {
        return value_closed_form(t, w, sol) + eps * (y[0] - y[1]);
    };
    std::vector<BoundarySample> pair01;
    for (const auto& s : samples)
        if (s.k == 0) pair01.push_back(s);
    REQUIRE(!pair01.empty());
    CHECK(neumann_check(probe, pair01) == doctest::Approx(2.0 * eps).epsilon(1e-6));

    const CandidateFn tangential = [&](double t, const Vector& y, double w) {
        return value_closed_form(t, w, sol) + eps * (y[0] + y[1]);
    };
    CHECK(neumann_check(tangential, pair01) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("paired gap at zero perturbation is exactly zero") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    std::vector<Perturbation> perts{{"identity", 1.0, {}, 1.0}};
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    const auto gaps = optimality_gap(m, kPrefs, sol, perts, st, mc_cfg(2000, 50, 13));
    REQUIRE(gaps.size() == 1);
    CHECK(gaps[0].gap == 0.0);
    CHECK(gaps[0].stderr_ == 0.0);
}

TEST_CASE("scaling consumption or abandoning the risky book costs value") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    std::vector<Perturbation> perts{{"c_x1.5", 1.0, {}, 1.5}, {"all_cash", 0.0, {}, 1.0}};
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    const auto gaps = optimality_gap(m, kPrefs, sol, perts, st, mc_cfg(20000, 100, 17));
    for (const auto& e : gaps) {
        CHECK(e.gap > 0.0);
        CHECK(e.z() > 2.0);
    }
}

TEST_CASE("rank invariance: permuted starts agree within the MC bands") {
    FirstOrderParams m = bench_model();
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const SpreadReport rep =
        rank_invariance_check(m, kPrefs, sol, Vector{3.0, 2.0, 1.0}, 3, 1.0, mc_cfg(8000, 100, 19));
    CHECK(rep.estimates.size() == 3);
    CHECK(rep.max_pairwise_z < 3.0);
}

TEST_CASE("one-asset Merton feedback value matches its closed form") {
    FirstOrderParams m;
    m.d = 1;
    m.mu_tilde = {0.08};
    m.sigma_tilde = Matrix(1, 1);
    m.sigma_tilde(0, 0) = 0.25;
    m.r = 0.02;
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const MarketState st{0.0, Vector{1.0}, 1.0};
    const ValueEstimate est = mc_value(m, kPrefs, feedback_strategy(sol), st, mc_cfg(40000, 200, 31));
    const double v = value_closed_form(0.0, 1.0, sol);
    CHECK(std::abs(est.mean - v) < 3.0 * est.stderr_ + 2e-3);
}

TEST_CASE("generic-coefficient mc_value agrees with the constant-coefficient one") {
    FirstOrderParams m = bench_model();
    RankCoefficients rc;
    rc.d = 3;
    rc.mu_fn = [mu = m.mu_tilde](double, const Vector&) { return mu; };
    rc.sigma_fn = [sig = m.sigma_tilde](double, const Vector&) { return sig; };
    const ClosedFormSolution sol = solve_closed_form(m, kPrefs, ConstraintSpec::unconstrained());
    const StrategyFn strat = feedback_strategy(sol);
    const MarketState st{0.0, Vector{3.0, 2.0, 1.0}, 1.0};
    const SimConfig cfg = mc_cfg(4000, 100, 29);
    const ValueEstimate a = mc_value(m, kPrefs, strat, st, cfg);
    const ValueEstimate b = mc_value(rc, m.r, kPrefs, strat, st, cfg);
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-10));
    CHECK(a.stderr_ == doctest::Approx(b.stderr_).epsilon(1e-8));
}

TEST_CASE("terminal moments run on both schemes") {
    FirstOrderParams m = bench_model();
    SimConfig named = mc_cfg(4000, 200, 23);
    named.scheme = Scheme::NamedLogEuler;
    SimConfig ranked = named;
    ranked.scheme = Scheme::RankedProjectedEuler;
    const TerminalMoments a = ranked_terminal_moments(m, Vector{1.2, 1.1, 1.0}, named);
    const TerminalMoments b = ranked_terminal_moments(m, Vector{1.2, 1.1, 1.0}, ranked);
    for (int k = 0; k < 3; ++k) {
        const double band =
            3.0 * std::sqrt(a.se_mean[k] * a.se_mean[k] + b.se_mean[k] * b.se_mean[k]);
        CHECK(std::abs(a.mean[k] - b.mean[k]) < band + 5e-3);
    }
}
