#include "rankfolio/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rankfolio/rng.hpp"

namespace rankfolio {

Matrix FirstOrderParams::a_tilde() const { return matmul(sigma_tilde, transpose(sigma_tilde)); }

void Preferences::require_valid() const {
    if (!(gamma > 0.0) || gamma == 1.0 || !std::isfinite(gamma))
        throw std::invalid_argument("preferences: gamma must be positive and != 1");
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("preferences: beta must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("preferences: horizon must be positive");
}

double power_utility(double w, double gamma) {
    if (w < 0.0) throw std::domain_error("power_utility: negative argument");
    if (w == 0.0) {
        if (gamma < 1.0) return 0.0;
        return -std::numeric_limits<double>::infinity();
    }
    return std::pow(w, 1.0 - gamma) / (1.0 - gamma);
}

void ConstraintSpec::require_valid(int d) const {
    if (kind == ConstraintKind::Unconstrained) return;
    if (lo < 1 || hi < lo || hi > d)
        throw std::invalid_argument("constraint: rank window must satisfy 1 <= n <= N <= d");
}

void MarketState::require_valid() const {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::domain_error("state: wealth must be positive");
    if (x.empty()) throw std::domain_error("state: empty capitalization vector");
    for (double xi : x)
        if (!(xi > 0.0) || !std::isfinite(xi))
            throw std::domain_error("state: capitalizations must be strictly positive and finite");
}

void rank_into(std::span<const double> x, std::span<int> rank_of_asset,
               std::span<int> asset_at_rank, std::span<double> sorted) {
    const int d = static_cast<int>(x.size());
    for (int k = 0; k < d; ++k) asset_at_rank[k] = k;
    // insertion sort, stable: equal values keep index order (lower index wins)
    for (int k = 1; k < d; ++k) {
        const int idx = asset_at_rank[k];
        const double v = x[idx];
        int j = k - 1;
        while (j >= 0 && x[asset_at_rank[j]] < v) {
            asset_at_rank[j + 1] = asset_at_rank[j];
            --j;
        }
        asset_at_rank[j + 1] = idx;
    }
    for (int k = 0; k < d; ++k) {
        rank_of_asset[asset_at_rank[k]] = k;
        sorted[k] = x[asset_at_rank[k]];
    }
}

Ranking rank_of(std::span<const double> x) {
    for (double xi : x)
        if (!(xi > 0.0) || !std::isfinite(xi))
            throw std::domain_error("rank_of: entries must be strictly positive and finite");
    const int d = static_cast<int>(x.size());
    Ranking rk;
    rk.rank_of_asset.resize(d);
    rk.asset_at_rank.resize(d);
    rk.sorted.resize(d);
    rank_into(x, rk.rank_of_asset, rk.asset_at_rank, rk.sorted);
    return rk;
}

namespace {

NamedCoefficients permute_to_named(const Ranking& rk, const Vector& mu_ranked,
                                   const Matrix& sigma_ranked) {
    const int d = static_cast<int>(rk.rank_of_asset.size());
    NamedCoefficients out;
    out.mu.resize(d);
    out.sigma = Matrix(d, d);
    for (int i = 0; i < d; ++i) {
        const int ri = rk.rank_of_asset[i];
        out.mu[i] = mu_ranked[ri];
        for (int j = 0; j < d; ++j) out.sigma(i, j) = sigma_ranked(ri, rk.rank_of_asset[j]);
    }
    return out;
}

}  // namespace

NamedCoefficients named_coefficients(double, std::span<const double> x,
                                     const FirstOrderParams& model) {
    const Ranking rk = rank_of(x);
    return permute_to_named(rk, model.mu_tilde, model.sigma_tilde);
}

NamedCoefficients named_coefficients(double t, std::span<const double> x,
                                     const RankCoefficients& model) {
    const Ranking rk = rank_of(x);
    const Vector mu_ranked = model.mu_fn(t, rk.sorted);
    const Matrix sigma_ranked = model.sigma_fn(t, rk.sorted);
    if (static_cast<int>(mu_ranked.size()) != model.d ||
        sigma_ranked.rows() != static_cast<std::size_t>(model.d) ||
        sigma_ranked.cols() != static_cast<std::size_t>(model.d))
        throw std::invalid_argument("named_coefficients: evaluator returned wrong shape");
    return permute_to_named(rk, mu_ranked, sigma_ranked);
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void add_check(ValidationReport& rep, std::string name, bool ok, std::string detail,
               double value = 0.0) {
    rep.checks.push_back({std::move(name), ok, std::move(detail), value});
    rep.passed = rep.passed && ok;
}

}  // namespace

ValidationReport validate(const FirstOrderParams& model) {
    ValidationReport rep;
    rep.passed = true;

    const bool shape_ok = model.d >= 1 && static_cast<int>(model.mu_tilde.size()) == model.d &&
                          model.sigma_tilde.rows() == static_cast<std::size_t>(model.d) &&
                          model.sigma_tilde.cols() == static_cast<std::size_t>(model.d);
    add_check(rep, "shape", shape_ok, shape_ok ? "" : "d, mu_tilde, sigma_tilde sizes disagree");
    if (!shape_ok) return rep;

    const bool finite_ok = all_finite(model.mu_tilde) && all_finite(model.sigma_tilde.data()) &&
                           std::isfinite(model.r);
    add_check(rep, "finite", finite_ok, finite_ok ? "" : "non-finite entry");
    if (!finite_ok) return rep;

    const bool sym = is_symmetric(model.sigma_tilde);
    add_check(rep, "symmetry", sym, sym ? "" : "sigma_tilde is not symmetric");

    const Matrix a = model.a_tilde();
    const bool spd = cholesky(a).has_value();
    add_check(rep, "ellipticity", spd, spd ? "" : "a = sigma sigma^T is not positive definite");

    const Vector ev = symmetric_eigenvalues(a);
    rep.min_eigenvalue = ev.empty() ? 0.0 : ev.front();
    add_check(rep, "min_eigenvalue", rep.min_eigenvalue > 0.0, "", rep.min_eigenvalue);

    return rep;
}

ValidationReport validate(const RankCoefficients& model, const ProbeConfig& probe) {
    ValidationReport rep;
    rep.passed = true;
    rep.note = "sampled probe: passing is necessary, not sufficient";

    if (model.d < 1 || !model.mu_fn || !model.sigma_fn) {
        add_check(rep, "shape", false, "d < 1 or missing evaluator");
        return rep;
    }
    const int d = model.d;
    auto gen = Xoshiro256pp::seeded(probe.seed);

    auto draw_ordered = [&](double scale) {
        Vector y(d);
        for (auto& v : y) v = scale * std::exp(standard_normal(gen));
        std::sort(y.begin(), y.end(), std::greater<>());
        return y;
    };

    double worst_mu = 0.0, worst_sigma = 0.0, min_eig = std::numeric_limits<double>::infinity();
    double worst_ratio = 0.0;
    bool eval_ok = true;

    for (int s = 0; s < probe.n_samples && eval_ok; ++s) {
        const double t = probe.t_max * uniform_open01(gen);
        // shrink a subset of samples toward the origin to catch blowups there
        const double scale = (s % 4 == 3) ? probe.y_scale * std::pow(10.0, -(s % 16)) : probe.y_scale;
        const Vector y1 = draw_ordered(scale);
        Vector y2;
        if (s % 2 == 0) {
            y2 = draw_ordered(scale);
        } else {  // nearby pair, still ordered
            y2 = y1;
            for (auto& v : y2) v *= 1.0 + 1e-6 * (uniform_open01(gen) - 0.5);
            std::sort(y2.begin(), y2.end(), std::greater<>());
        }

        Vector mu1, mu2;
        Matrix s1, s2;
        try {
            mu1 = model.mu_fn(t, y1);
            mu2 = model.mu_fn(t, y2);
            s1 = model.sigma_fn(t, y1);
            s2 = model.sigma_fn(t, y2);
        } catch (const std::exception& e) {
            add_check(rep, "evaluator", false, std::string("evaluator threw: ") + e.what());
            eval_ok = false;
            break;
        }

        for (double v : mu1) worst_mu = std::max(worst_mu, std::abs(v));
        double fro = 0.0;
        for (double v : s1.data()) fro += v * v;
        worst_sigma = std::max(worst_sigma, std::sqrt(fro));

        const Matrix a = matmul(s1, transpose(s1));
        min_eig = std::min(min_eig, symmetric_eigenvalues(a).front());

        double dy = 0.0, dmu = 0.0, dsig = 0.0;
        for (int k = 0; k < d; ++k) {
            dy += (y1[k] - y2[k]) * (y1[k] - y2[k]);
            const double m = y1[k] * mu1[k] - y2[k] * mu2[k];
            dmu += m * m;
            for (int l = 0; l < d; ++l) {
                const double q = y1[k] * s1(k, l) - y2[k] * s2(k, l);
                dsig += q * q;
            }
        }
        if (dy > 0.0)
            worst_ratio = std::max(worst_ratio, (std::sqrt(dmu) + std::sqrt(dsig)) / std::sqrt(dy));
    }

    if (eval_ok) {
        add_check(rep, "drift_bound", worst_mu <= model.drift_bound,
                  "worst sampled |mu| vs declared bound", worst_mu);
        add_check(rep, "vol_bound", worst_sigma <= model.vol_bound,
                  "worst sampled Frobenius norm vs declared bound", worst_sigma);
        add_check(rep, "ellipticity", min_eig >= model.ellipticity_floor,
                  "smallest sampled eigenvalue of sigma sigma^T", min_eig);
        add_check(rep, "lipschitz", worst_ratio <= model.lipschitz_bound,
                  "worst sampled Lipschitz ratio vs declared constant", worst_ratio);
        rep.min_eigenvalue = min_eig;
        rep.worst_lipschitz_ratio = worst_ratio;
    }
    return rep;
}

}  // namespace rankfolio
