#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rankfolio/estimate.hpp"

using namespace rankfolio;

namespace {

FirstOrderParams iso_model(Vector mu, double s, double r) {
    FirstOrderParams m;
    m.d = static_cast<int>(mu.size());
    m.mu_tilde = std::move(mu);
    m.sigma_tilde = Matrix(m.d, m.d);
    for (int i = 0; i < m.d; ++i) m.sigma_tilde(i, i) = s;
    m.r = r;
    return m;
}

SimConfig ranked_cfg(std::int64_t paths, int steps, double t1, std::uint64_t seed) {
    SimConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.t1 = t1;
    c.master_seed = seed;
    c.scheme = Scheme::RankedProjectedEuler;
    return c;
}

}  // namespace

TEST_CASE("scalar realized variance recovers the volatility") {
    const double s = 0.3;
    const FirstOrderParams m = iso_model({0.05}, s, 0.0);
    const PathBundle b = simulate_ranked_reflected(m, Vector{1.0}, ranked_cfg(400, 2000, 4.0, 3));
    const RealizedCov rc = realized_cov(b);
    CHECK(std::abs(rc.a_hat(0, 0) - s * s) < 3.0 * rc.a_stderr(0, 0) + 1e-4);
}

TEST_CASE("scalar drift estimator is consistent without reflection") {
    const double mu = 0.08, s = 0.25;
    const FirstOrderParams m = iso_model({mu}, s, 0.0);
    const PathBundle b = simulate_ranked_reflected(m, Vector{1.0}, ranked_cfg(400, 4000, 16.0, 5));
    const EstimationResult est = collision_drift_estimator(b);
    CHECK(est.phi_source == "projection");
    CHECK(std::abs(est.mu_hat[0] - mu) < 3.0 * est.mu_stderr[0] + 5e-3);
}

TEST_CASE("symmetric two-rank model: both drifts recovered, corrections cancel") {
    const double mu = 0.04;
    const FirstOrderParams m = iso_model({mu, mu}, 0.2, 0.0);
    const PathBundle b =
        simulate_ranked_reflected(m, Vector{1.0, 1.0}, ranked_cfg(300, 4000, 16.0, 7));
    const EstimationResult est = collision_drift_estimator(b);
    for (int k = 0; k < 2; ++k)
        CHECK(std::abs(est.mu_hat[k] - mu) < 3.0 * est.mu_stderr[k] + 8e-3);

    // the reflection corrections (Phi over Y sums) are equal and opposite path by path
    double worst = 0.0;
    for (std::int64_t p = 0; p < b.n_paths; ++p) {
        double c0 = 0.0, c1 = 0.0;
        for (int s = 0; s < b.n_steps; ++s) {
            const std::size_t b0 = b.node(p, s), b1 = b.node(p, s + 1);
            c0 += (b.Phi[b1 + 0] - b.Phi[b0 + 0]) / b.Y[b1 + 0];
            c1 += (b.Phi[b1 + 1] - b.Phi[b0 + 1]) / b.Y[b1 + 1];
        }
        worst = std::max(worst, std::abs(c0 + c1) / std::max(1.0, std::abs(c0)));
    }
    CHECK(worst < 0.05);  // log-space displacements are exactly opposite; levels nearly so
}

TEST_CASE("estimators are deterministic functions of the bundle") {
    const FirstOrderParams m = iso_model({0.06, 0.02}, 0.2, 0.0);
    const PathBundle b =
        simulate_ranked_reflected(m, Vector{1.1, 1.0}, ranked_cfg(64, 500, 2.0, 11));
    const EstimationResult a = collision_drift_estimator(b);
    const EstimationResult c = collision_drift_estimator(b);
    CHECK(a.mu_hat == c.mu_hat);
    CHECK(a.a_hat.data() == c.a_hat.data());
}

TEST_CASE("covariance is invariant to the reflection mechanism") {
    const FirstOrderParams m = iso_model({0.05, 0.01}, 0.2, 0.0);
    SimConfig named = ranked_cfg(600, 1000, 2.0, 13);
    named.scheme = Scheme::NamedLogEuler;
    const PathBundle bn = simulate_named(m, Vector{1.0, 1.0}, named);
    const PathBundle br =
        simulate_ranked_reflected(m, Vector{1.0, 1.0}, ranked_cfg(600, 1000, 2.0, 14));
    const RealizedCov cn = realized_cov(bn);
    const RealizedCov cr = realized_cov(br);
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            const double band =
                3.0 * std::sqrt(cn.a_stderr(k, l) * cn.a_stderr(k, l) +
                                cr.a_stderr(k, l) * cr.a_stderr(k, l)) +
                2e-3;
            CHECK(std::abs(cn.a_hat(k, l) - cr.a_hat(k, l)) < band);
        }
}

TEST_CASE("drift estimator needs a reflection record") {
    const FirstOrderParams m = iso_model({0.05, 0.01}, 0.2, 0.0);
    SimConfig named = ranked_cfg(16, 50, 1.0, 15);
    named.scheme = Scheme::NamedLogEuler;
    const PathBundle bn = simulate_named(m, Vector{1.0, 1.0}, named);
    CHECK_THROWS_WITH_AS(collision_drift_estimator(bn),
                         doctest::Contains("reflection record"), std::invalid_argument);

    // but works through the local-time reconstruction
    const double eps = 3.0 * std::sqrt(0.08 / 50.0);
    const ReflectionReconstruction rec = reflection_from_local_times(bn, m, eps);
    const EstimationResult est = collision_drift_estimator(bn, rec);
    CHECK(est.phi_source == "local_time");
    CHECK(est.mu_hat.size() == 2);
}

TEST_CASE("nested-horizon errors shrink with T on a common path family") {
    const FirstOrderParams m = iso_model({0.09, 0.05, 0.01}, 0.2, 0.02);
    const int steps_per_year = 250;
    const PathBundle b = simulate_ranked_reflected(m, Vector{1.2, 1.1, 1.0},
                                                   ranked_cfg(120, 40 * steps_per_year, 40.0, 17));
    double prev_err = 1e9, prev_se = 1e9;
    for (int t : {10, 20, 40}) {
        const EstimationResult est = collision_drift_estimator(b, t * steps_per_year);
        double err = 0.0, se = 0.0;
        for (int k = 0; k < 3; ++k) {
            err = std::max(err, std::abs(est.mu_hat[k] - m.mu_tilde[k]));
            se = std::max(se, est.mu_stderr[k]);
        }
        CHECK(err < prev_err);
        CHECK(se < prev_se);
        prev_err = err;
        prev_se = se;
    }
}
