#pragma once

#include "rankfolio/model.hpp"

namespace rankfolio {

// Closed-form solution of the consumption-investment problem for a
// first-order model under one of the three constraint regimes. The
// per-rank weights are constant in (t, y, w); the whole time dependence
// sits in the scalar discount function f(.; kappa).
struct ClosedFormSolution {
    ConstraintSpec constraint;
    Vector pi_tilde_star;  // length d, exact zeros outside the constraint window
    double kappa = 0.0;    // growth rate constant: nu, nu_[n:N], or zeta
    Preferences prefs;
    double r = 0.0;
};

// f(t; kappa) = e^{(kappa/gamma)(T-t)} + int_t^T e^{(kappa/gamma)(s-t) - (beta/gamma)s} ds.
// The kappa == beta degeneracy switches to the analytic limit branch at
// |kappa - beta| < 1e-8.
double f_eval(double t, double kappa, const Preferences& prefs);

double nu_unconstrained(const FirstOrderParams& model, const Preferences& prefs);
Vector merton_fraction_unconstrained(const FirstOrderParams& model, const Preferences& prefs);

// Open market over ranks [n, N] (1-based, inclusive). Returned vector has
// length d with exact zeros outside the window.
Vector open_market_fraction(const FirstOrderParams& model, const Preferences& prefs, int n,
                            int big_n);
double nu_open(const FirstOrderParams& model, const Preferences& prefs, int n, int big_n);

// Open market + fully invested (weights sum to one inside the window).
Vector fully_invested_fraction(const FirstOrderParams& model, const Preferences& prefs, int n,
                               int big_n);
double zeta_fully_invested(const FirstOrderParams& model, const Preferences& prefs, int n,
                           int big_n);

ClosedFormSolution solve_closed_form(const FirstOrderParams& model, const Preferences& prefs,
                                     const ConstraintSpec& constraint);

// c*(t, w) = e^{-(beta/gamma) t} w / f(t; kappa), from the first-order
// condition e^{-beta t} c^{-gamma} = dv/dw.
double consumption_rate(double t, double w, const ClosedFormSolution& sol);

// v(t, w) = f(t; kappa)^gamma w^{1-gamma} / (1-gamma).
double value_closed_form(double t, double w, const ClosedFormSolution& sol);

// Named feedback control: weights are the per-rank weights permuted by the
// current ranking of x.
StrategyFn feedback_strategy(const ClosedFormSolution& sol);

}  // namespace rankfolio
