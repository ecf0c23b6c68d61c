#include "rankfolio/strategy.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace rankfolio {

namespace {

struct Window {
    Vector mu;  // truncated mu_tilde
    Matrix a;   // truncated a_tilde
    int lo;     // 0-based offset
    int size;
};

Window truncate(const FirstOrderParams& model, int n, int big_n) {
    if (n < 1 || big_n < n || big_n > model.d)
        throw std::invalid_argument("rank window must satisfy 1 <= n <= N <= d");
    const Matrix a_full = model.a_tilde();
    Window w;
    w.lo = n - 1;
    w.size = big_n - n + 1;
    w.mu.resize(w.size);
    w.a = Matrix(w.size, w.size);
    for (int i = 0; i < w.size; ++i) {
        w.mu[i] = model.mu_tilde[w.lo + i];
        for (int j = 0; j < w.size; ++j) w.a(i, j) = a_full(w.lo + i, w.lo + j);
    }
    return w;
}

Vector excess(const Window& w, double r) {
    Vector e(w.size);
    for (int i = 0; i < w.size; ++i) e[i] = w.mu[i] - r;
    return e;
}

double nu_of_window(const Window& w, double r, const Preferences& prefs) {
    const Vector e = excess(w, r);
    const Vector sol = spd_solve(w.a, e);
    return (1.0 - prefs.gamma) * (r + dot(e, sol) / (2.0 * prefs.gamma));
}

Vector embed(const Vector& eta, int d, int lo) {
    Vector pi(d, 0.0);
    for (std::size_t i = 0; i < eta.size(); ++i) pi[lo + i] = eta[i];
    return pi;
}

// lambda multiplier of the fully-invested window problem
double fully_invested_lambda(const Window& w, const Preferences& prefs) {
    const Vector ones(w.size, 1.0);
    const Vector ainv_one = spd_solve(w.a, ones);
    const Vector ainv_mu = spd_solve(w.a, w.mu);
    const double one_ainv_one = dot(ones, ainv_one);
    const double one_ainv_mu = dot(ones, ainv_mu);
    return (prefs.gamma - one_ainv_mu) / one_ainv_one;
}

}  // namespace

double f_eval(double t, double kappa, const Preferences& prefs) {
    prefs.require_valid();
    if (!(t >= 0.0) || t > prefs.horizon)
        throw std::domain_error("f_eval: t outside [0, T]");
    const double g = prefs.gamma;
    const double tau = prefs.horizon - t;
    const double first = std::exp((kappa / g) * tau);
    const double lambda = (kappa - prefs.beta) / g;
    double phi;  // int_0^tau e^{lambda u} du
    if (std::abs(kappa - prefs.beta) < 1e-8)
        phi = tau * (1.0 + 0.5 * lambda * tau);
    else
        phi = std::expm1(lambda * tau) / lambda;
    return first + std::exp(-(prefs.beta / g) * t) * phi;
}

double nu_unconstrained(const FirstOrderParams& model, const Preferences& prefs) {
    prefs.require_valid();
    return nu_of_window(truncate(model, 1, model.d), model.r, prefs);
}

Vector merton_fraction_unconstrained(const FirstOrderParams& model, const Preferences& prefs) {
    prefs.require_valid();
    const Window w = truncate(model, 1, model.d);
    Vector sol = spd_solve(w.a, excess(w, model.r));
    for (auto& v : sol) v /= prefs.gamma;
    return sol;
}

Vector open_market_fraction(const FirstOrderParams& model, const Preferences& prefs, int n,
                            int big_n) {
    prefs.require_valid();
    const Window w = truncate(model, n, big_n);
    Vector eta = spd_solve(w.a, excess(w, model.r));
    for (auto& v : eta) v /= prefs.gamma;
    return embed(eta, model.d, w.lo);
}

double nu_open(const FirstOrderParams& model, const Preferences& prefs, int n, int big_n) {
    prefs.require_valid();
    return nu_of_window(truncate(model, n, big_n), model.r, prefs);
}

Vector fully_invested_fraction(const FirstOrderParams& model, const Preferences& prefs, int n,
                               int big_n) {
    prefs.require_valid();
    const Window w = truncate(model, n, big_n);
    const double lambda = fully_invested_lambda(w, prefs);
    Vector shifted(w.size);
    for (int i = 0; i < w.size; ++i) shifted[i] = w.mu[i] + lambda;
    Vector eta = spd_solve(w.a, shifted);
    for (auto& v : eta) v /= prefs.gamma;
    return embed(eta, model.d, w.lo);
}

double zeta_fully_invested(const FirstOrderParams& model, const Preferences& prefs, int n,
                           int big_n) {
    prefs.require_valid();
    const Window w = truncate(model, n, big_n);
    const double g = prefs.gamma;
    const double lambda = fully_invested_lambda(w, prefs);
    Vector plus(w.size), minus(w.size);
    for (int i = 0; i < w.size; ++i) {
        plus[i] = w.mu[i] + lambda;
        minus[i] = w.mu[i] - lambda;
    }
    const double zeta = (1.0 - g) / (2.0 * g) * dot(minus, spd_solve(w.a, plus));

    // independent route through the maximizer; must agree to 1e-10
    Vector eta = spd_solve(w.a, plus);
    for (auto& v : eta) v /= g;
    const double zeta_via_eta =
        (1.0 - g) * (dot(eta, w.mu) - 0.5 * g * quadratic_form(w.a, eta));
    const double scale = std::max({1.0, std::abs(zeta), std::abs(zeta_via_eta)});
    if (std::abs(zeta - zeta_via_eta) > 1e-10 * scale)
        throw std::logic_error("zeta_fully_invested: internal cross-check failed");
    return zeta;
}

ClosedFormSolution solve_closed_form(const FirstOrderParams& model, const Preferences& prefs,
                                     const ConstraintSpec& constraint) {
    prefs.require_valid();
    constraint.require_valid(model.d);
    ClosedFormSolution sol;
    sol.constraint = constraint;
    sol.prefs = prefs;
    sol.r = model.r;
    switch (constraint.kind) {
        case ConstraintKind::Unconstrained:
            sol.pi_tilde_star = merton_fraction_unconstrained(model, prefs);
            sol.kappa = nu_unconstrained(model, prefs);
            break;
        case ConstraintKind::OpenMarket:
            sol.pi_tilde_star = open_market_fraction(model, prefs, constraint.lo, constraint.hi);
            sol.kappa = nu_open(model, prefs, constraint.lo, constraint.hi);
            break;
        case ConstraintKind::FullyInvestedOpen:
            sol.pi_tilde_star =
                fully_invested_fraction(model, prefs, constraint.lo, constraint.hi);
            sol.kappa = zeta_fully_invested(model, prefs, constraint.lo, constraint.hi);
            break;
    }
    return sol;
}

double consumption_rate(double t, double w, const ClosedFormSolution& sol) {
    if (!(w > 0.0)) throw std::domain_error("consumption_rate: wealth must be positive");
    const double f = f_eval(t, sol.kappa, sol.prefs);
    return std::exp(-(sol.prefs.beta / sol.prefs.gamma) * t) * w / f;
}

double value_closed_form(double t, double w, const ClosedFormSolution& sol) {
    if (!(w > 0.0)) throw std::domain_error("value_closed_form: wealth must be positive");
    const double g = sol.prefs.gamma;
    const double f = f_eval(t, sol.kappa, sol.prefs);
    return std::pow(f, g) * std::pow(w, 1.0 - g) / (1.0 - g);
}

StrategyFn feedback_strategy(const ClosedFormSolution& sol) {
    return [sol](double t, std::span<const double> x, double w, std::span<double> pi,
                 double& consumption) {
        const int d = static_cast<int>(x.size());
        thread_local std::vector<int> roa, aar;
        thread_local std::vector<double> sorted;
        roa.resize(d);
        aar.resize(d);
        sorted.resize(d);
        rank_into(x, roa, aar, sorted);
        for (int i = 0; i < d; ++i) pi[i] = sol.pi_tilde_star[roa[i]];
        consumption = consumption_rate(t, w, sol);
    };
}

}  // namespace rankfolio
