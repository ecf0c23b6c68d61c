#include "rankfolio/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rankfolio/io.hpp"
#include "rankfolio/kernels.hpp"
#include "rankfolio/rng.hpp"

namespace rankfolio {

namespace {

// Streams wealth and the running utility integral along each path for one
// or more rank-space strategy variants sharing the same noise.
struct RankStrategyVariant {
    Vector pi_tilde;           // constant per-rank weights
    double consumption_scale;  // multiplies the base feedback consumption
};

class RankValueObserver : public PathObserver {
public:
    RankValueObserver(const FirstOrderParams& model, const Preferences& prefs,
                      const ClosedFormSolution& sol, std::vector<RankStrategyVariant> variants,
                      double w0, const SimConfig& cfg)
        : model_(model), prefs_(prefs), sol_(sol), variants_(std::move(variants)), w0_(w0),
          n_paths_(cfg.n_paths), t_end_(cfg.t1), h_(cfg.step()) {
        const std::size_t n = static_cast<std::size_t>(cfg.n_paths) * variants_.size();
        v_.assign(n, w0_);
        j_.assign(n, 0.0);
        g_prev_.assign(n, 0.0);
        dead_.assign(n, 0);
        excess_.resize(variants_.size());
        for (std::size_t vi = 0; vi < variants_.size(); ++vi) {
            double e = 0.0;
            for (int k = 0; k < model.d; ++k)
                e += variants_[vi].pi_tilde[k] * (model.mu_tilde[k] - model.r);
            excess_[vi] = e;
        }
    }

    void on_step(const StepLanes& st) override {
        const int d = st.d;
        const double h = st.h;
        const double base_rate =
            std::exp(-(prefs_.beta / prefs_.gamma) * st.t) / f_eval(st.t, sol_.kappa, prefs_);
        const double disc = std::exp(-prefs_.beta * st.t);
        for (std::size_t vi = 0; vi < variants_.size(); ++vi) {
            const auto& var = variants_[vi];
            const double crate = var.consumption_scale * base_rate;
            for (int i = 0; i < st.nlanes; ++i) {
                const std::size_t slot = slot_of(st.path0 + i, vi);
                if (dead_[slot] || !st.alive[i]) {
                    if (!st.alive[i]) dead_[slot] = 1;
                    continue;
                }
                const double v = v_[slot];
                const double c = crate * v;
                const double g = disc * power_utility(c, prefs_.gamma);
                if (st.step == 0)
                    g_prev_[slot] = g;
                else {
                    j_[slot] += 0.5 * (g_prev_[slot] + g) * h;
                    g_prev_[slot] = g;
                }
                double shock = 0.0;
                for (int k = 0; k < d; ++k)
                    shock += var.pi_tilde[k] *
                             st.ranked_diff[static_cast<std::size_t>(k) * st.nlanes + i];
                const double vn =
                    v + v * (model_.r + excess_[vi]) * h - c * h + v * st.sqrt_h * shock;
                if (!(vn > 0.0) || !std::isfinite(vn)) {
                    dead_[slot] = 2;  // inadmissible
                    continue;
                }
                v_[slot] = vn;
            }
        }
    }

    void on_block_end(const BlockLanes& bl) override {
        const double disc = std::exp(-prefs_.beta * t_end_);
        const double base_rate = std::exp(-(prefs_.beta / prefs_.gamma) * t_end_) /
                                 f_eval(t_end_, sol_.kappa, prefs_);
        for (std::size_t vi = 0; vi < variants_.size(); ++vi) {
            const double crate = variants_[vi].consumption_scale * base_rate;
            for (int i = 0; i < bl.nlanes; ++i) {
                const std::size_t slot = slot_of(bl.path0 + i, vi);
                if (dead_[slot] || !bl.alive[i]) {
                    if (!bl.alive[i] && !dead_[slot]) dead_[slot] = 1;
                    continue;
                }
                const double v = v_[slot];
                const double g = disc * power_utility(crate * v, prefs_.gamma);
                j_[slot] += 0.5 * (g_prev_[slot] + g) * h_;
                j_[slot] += power_utility(v, prefs_.gamma);
            }
        }
    }

    std::size_t slot_of(std::int64_t path, std::size_t variant) const {
        return variant * static_cast<std::size_t>(n_paths_) + path;
    }

    const FirstOrderParams& model_;
    const Preferences& prefs_;
    const ClosedFormSolution& sol_;
    std::vector<RankStrategyVariant> variants_;
    double w0_;
    std::int64_t n_paths_;
    double t_end_;
    double h_;
    std::vector<double> v_, j_, g_prev_;
    std::vector<std::uint8_t> dead_;
    Vector excess_;
};

// Generic-strategy observer: evaluates the user StrategyFn on named levels.
class StrategyValueObserver : public PathObserver {
public:
    StrategyValueObserver(double r, const Preferences& prefs, const StrategyFn& strategy,
                          double w0, const SimConfig& cfg)
        : r_(r), prefs_(prefs), strategy_(strategy), w0_(w0), t_end_(cfg.t1), h_(cfg.step()) {
        v_.assign(cfg.n_paths, w0_);
        j_.assign(cfg.n_paths, 0.0);
        g_prev_.assign(cfg.n_paths, 0.0);
        dead_.assign(cfg.n_paths, 0);
    }

    void on_step(const StepLanes& st) override {
        const int d = st.d;
        const double disc = std::exp(-prefs_.beta * st.t);
        thread_local Vector x, pi;
        x.resize(d);
        pi.resize(d);
        for (int i = 0; i < st.nlanes; ++i) {
            const std::int64_t p = st.path0 + i;
            if (dead_[p] || !st.alive[i]) {
                if (!st.alive[i]) dead_[p] = 1;
                continue;
            }
            for (int j = 0; j < d; ++j)
                x[j] = std::exp(st.z_before[static_cast<std::size_t>(j) * st.nlanes + i]);
            double c = 0.0;
            strategy_(st.t, x, v_[p], pi, c);
            const double g = disc * power_utility(c, prefs_.gamma);
            if (st.step == 0)
                g_prev_[p] = g;
            else {
                j_[p] += 0.5 * (g_prev_[p] + g) * st.h;
                g_prev_[p] = g;
            }
            double excess = 0.0, shock = 0.0;
            for (int j = 0; j < d; ++j) {
                const int k = st.rank_before[static_cast<std::size_t>(j) * st.nlanes + i];
                excess += pi[j] * (st.ranked_mu[static_cast<std::size_t>(k) * st.nlanes + i] - r_);
                shock += pi[j] * st.ranked_diff[static_cast<std::size_t>(k) * st.nlanes + i];
            }
            const double v = v_[p];
            const double vn = v + v * (r_ + excess) * st.h - c * st.h + v * st.sqrt_h * shock;
            if (!(vn > 0.0) || !std::isfinite(vn)) {
                dead_[p] = 2;
                continue;
            }
            v_[p] = vn;
        }
    }

    void on_block_end(const BlockLanes& bl) override {
        const int d = bl.d;
        const double disc = std::exp(-prefs_.beta * t_end_);
        thread_local Vector x, pi;
        x.resize(d);
        pi.resize(d);
        for (int i = 0; i < bl.nlanes; ++i) {
            const std::int64_t p = bl.path0 + i;
            if (dead_[p] || !bl.alive[i]) {
                if (!bl.alive[i] && !dead_[p]) dead_[p] = 1;
                continue;
            }
            for (int j = 0; j < d; ++j)
                x[j] = std::exp(bl.zlog[static_cast<std::size_t>(j) * bl.nlanes + i]);
            double c = 0.0;
            strategy_(t_end_, x, v_[p], pi, c);
            const double g = disc * power_utility(c, prefs_.gamma);
            j_[p] += 0.5 * (g_prev_[p] + g) * h_;
            j_[p] += power_utility(v_[p], prefs_.gamma);
        }
    }

    double r_;
    const Preferences& prefs_;
    const StrategyFn& strategy_;
    double w0_;
    double t_end_;
    double h_;
    std::vector<double> v_, j_, g_prev_;
    std::vector<std::uint8_t> dead_;
};

struct MeanStderr {
    double mean = 0.0, se = 0.0;
    std::int64_t n = 0;
};

MeanStderr reduce_mean(const std::vector<double>& x, const std::vector<std::uint8_t>& dead,
                       std::size_t offset, std::int64_t n_paths) {
    // deterministic: kernel reductions over a compacted copy in path order
    std::vector<double> kept;
    kept.reserve(n_paths);
    for (std::int64_t p = 0; p < n_paths; ++p)
        if (!dead[offset + p]) kept.push_back(x[offset + p]);
    MeanStderr out;
    out.n = static_cast<std::int64_t>(kept.size());
    if (out.n == 0) return out;
    out.mean = kernels::sum(kept) / out.n;
    if (out.n > 1) {
        for (auto& v : kept) v -= out.mean;  // two-pass: exact zero for constant samples
        const double var = std::max(0.0, kernels::dot(kept, kept) / (out.n - 1));
        out.se = std::sqrt(var / out.n);
    }
    return out;
}

std::uint64_t value_fingerprint(const FirstOrderParams& model, const Preferences& prefs,
                                const MarketState& state, const SimConfig& cfg) {
    std::string s = io::describe(model) + io::describe(prefs) + io::describe(cfg);
    s += io::format_double(state.t) + "," + io::format_double(state.w);
    for (double xv : state.x) s += "," + io::format_double(xv);
    return io::fnv1a64(s);
}

}  // namespace

ValueEstimate mc_value(const FirstOrderParams& model, const Preferences& prefs,
                       const StrategyFn& strategy, const MarketState& state,
                       const SimConfig& config) {
    prefs.require_valid();
    state.require_valid();
    SimConfig cfg = config;
    cfg.t0 = state.t;
    cfg.t1 = prefs.horizon;
    cfg.scheme = Scheme::NamedLogEuler;
    cfg.require_valid();

    StrategyValueObserver obs(model.r, prefs, strategy, state.w, cfg);
    run_paths(model, state.x, cfg, obs);

    ValueEstimate est;
    const MeanStderr ms = reduce_mean(obs.j_, obs.dead_, 0, cfg.n_paths);
    est.mean = ms.mean;
    est.stderr_ = ms.se;
    est.n_paths = ms.n;
    est.n_inadmissible = cfg.n_paths - ms.n;
    est.reliable = est.n_inadmissible <= cfg.n_paths / 1000;
    est.fingerprint = value_fingerprint(model, prefs, state, cfg);
    return est;
}

ValueEstimate mc_value(const RankCoefficients& model, double r, const Preferences& prefs,
                       const StrategyFn& strategy, const MarketState& state,
                       const SimConfig& config) {
    prefs.require_valid();
    state.require_valid();
    SimConfig cfg = config;
    cfg.t0 = state.t;
    cfg.t1 = prefs.horizon;
    cfg.scheme = Scheme::NamedLogEuler;
    cfg.require_valid();

    StrategyValueObserver obs(r, prefs, strategy, state.w, cfg);
    run_paths(model, state.x, cfg, obs);

    ValueEstimate est;
    const MeanStderr ms = reduce_mean(obs.j_, obs.dead_, 0, cfg.n_paths);
    est.mean = ms.mean;
    est.stderr_ = ms.se;
    est.n_paths = ms.n;
    est.n_inadmissible = cfg.n_paths - ms.n;
    est.reliable = est.n_inadmissible <= cfg.n_paths / 1000;
    std::string desc = "rank_coefficients{d=" + std::to_string(model.d) + "}" +
                       io::format_double(r) + io::describe(prefs) + io::describe(cfg);
    desc += io::format_double(state.t) + "," + io::format_double(state.w);
    for (double xv : state.x) desc += "," + io::format_double(xv);
    est.fingerprint = io::fnv1a64(desc);
    return est;
}

ResidualReport hjb_residual(const ClosedFormSolution& sol, const FirstOrderParams& model,
                            const HjbGrid& grid, double f_scale, bool cross_check_maximizer,
                            std::uint64_t seed) {
    const Preferences& prefs = sol.prefs;
    prefs.require_valid();
    const double g = prefs.gamma;
    const double T = prefs.horizon;
    const Matrix a = model.a_tilde();
    const Vector& pi = sol.pi_tilde_star;

    double excess = 0.0;
    for (int k = 0; k < model.d; ++k) excess += pi[k] * (model.mu_tilde[k] - model.r);
    const double quad = quadratic_form(a, pi);

    auto hamiltonian = [&](double t, double w, double vw, double vww, const Vector& p,
                           double c) {
        double e = 0.0;
        for (int k = 0; k < model.d; ++k) e += p[k] * (model.mu_tilde[k] - model.r);
        const double q = quadratic_form(a, p);
        return w * vw * (model.r + e) + 0.5 * w * w * vww * q - c * vw +
               std::exp(-prefs.beta * t) * power_utility(c, g);
    };

    ResidualReport rep;
    rep.nt = grid.nt;
    rep.nw = grid.nw;

    const double fd = 1e-5;
    auto gen = Xoshiro256pp::seeded(seed);
    std::vector<std::pair<double, double>> check_nodes;

    for (int it = 0; it < grid.nt; ++it) {
        const double t = T * (it + 1) / (grid.nt + 1);
        const double f = f_scale * f_eval(t, sol.kappa, prefs);
        const double fp =
            f_scale * (f_eval(t + fd, sol.kappa, prefs) - f_eval(t - fd, sol.kappa, prefs)) /
            (2.0 * fd);
        for (int iw = 0; iw < grid.nw; ++iw) {
            const double w =
                grid.w_lo * std::pow(grid.w_hi / grid.w_lo,
                                     grid.nw > 1 ? static_cast<double>(iw) / (grid.nw - 1) : 0.0);
            const double wpow = std::pow(w, 1.0 - g);
            const double vt = g * std::pow(f, g - 1.0) * fp * wpow / (1.0 - g);
            const double vw = std::pow(f, g) * std::pow(w, -g);
            const double vww = -g * std::pow(f, g) * std::pow(w, -g - 1.0);
            const double c = std::exp(-(prefs.beta / g) * t) * w / f;
            const double invest = w * vw * (model.r + excess) + 0.5 * w * w * vww * quad;
            const double cons =
                -c * vw + std::exp(-prefs.beta * t) * power_utility(c, g);
            const double res = vt + invest + cons;
            const double norm = std::abs(res) / std::abs(vt);
            if (norm > rep.max_normalized_residual) {
                rep.max_normalized_residual = norm;
                rep.argmax_t = t;
                rep.argmax_w = w;
            }
            if (cross_check_maximizer && uniform_open01(gen) < 10.0 / (grid.nt * grid.nw))
                check_nodes.push_back({t, w});
        }
    }

    // terminal condition of the (possibly perturbed) candidate
    for (int iw = 0; iw < grid.nw; ++iw) {
        const double w =
            grid.w_lo * std::pow(grid.w_hi / grid.w_lo,
                                 grid.nw > 1 ? static_cast<double>(iw) / (grid.nw - 1) : 0.0);
        const double fT = f_scale * f_eval(T, sol.kappa, prefs);
        const double v_term = std::pow(fT, g) * std::pow(w, 1.0 - g) / (1.0 - g);
        rep.terminal_gap = std::max(rep.terminal_gap, std::abs(v_term - power_utility(w, g)));
    }

    if (cross_check_maximizer) {
        // search directions spanning the constraint set around pi*
        std::vector<Vector> dirs;
        const int lo = sol.constraint.kind == ConstraintKind::Unconstrained ? 0
                                                                            : sol.constraint.lo - 1;
        const int hi = sol.constraint.kind == ConstraintKind::Unconstrained ? model.d - 1
                                                                            : sol.constraint.hi - 1;
        if (sol.constraint.kind == ConstraintKind::FullyInvestedOpen) {
            for (int k = lo; k < hi; ++k) {
                Vector dvec(model.d, 0.0);
                dvec[k] = 1.0;
                dvec[k + 1] = -1.0;
                dirs.push_back(dvec);
            }
        } else {
            for (int k = lo; k <= hi; ++k) {
                Vector dvec(model.d, 0.0);
                dvec[k] = 1.0;
                dirs.push_back(dvec);
            }
        }
        for (const auto& [t, w] : check_nodes) {
            const double f = f_scale * f_eval(t, sol.kappa, prefs);
            const double fp = f_scale *
                              (f_eval(t + fd, sol.kappa, prefs) - f_eval(t - fd, sol.kappa, prefs)) /
                              (2.0 * fd);
            const double vw = std::pow(f, g) * std::pow(w, -g);
            const double vww = -g * std::pow(f, g) * std::pow(w, -g - 1.0);
            const double c_star = std::exp(-(prefs.beta / g) * t) * w / f;
            const double h_star = hamiltonian(t, w, vw, vww, pi, c_star);
            const double vt_scale =
                std::abs(g * std::pow(f, g - 1.0) * fp * std::pow(w, 1.0 - g) / (1.0 - g));
            double best = h_star;
            // coarse box over the constraint-set directions
            const int npts = 9;
            std::vector<int> idx(dirs.size(), 0);
            const std::size_t total = static_cast<std::size_t>(std::pow(npts, dirs.size()));
            if (total <= 100000) {
                Vector cand(model.d);
                for (std::size_t flat = 0; flat < total; ++flat) {
                    std::size_t q = flat;
                    cand = pi;
                    for (std::size_t dd = 0; dd < dirs.size(); ++dd) {
                        const int step = static_cast<int>(q % npts) - npts / 2;
                        q /= npts;
                        const double amt = 0.25 * step;
                        for (int k = 0; k < model.d; ++k) cand[k] += amt * dirs[dd][k];
                    }
                    best = std::max(best, hamiltonian(t, w, vw, vww, cand, c_star));
                }
            }
            for (int ci = 1; ci <= 25; ++ci)
                best = std::max(best,
                                hamiltonian(t, w, vw, vww, pi, c_star * (0.25 + 0.15 * ci)));
            const double denom = vt_scale > 0.0 ? vt_scale : 1.0;
            rep.maximizer_improvement =
                std::max(rep.maximizer_improvement, (best - h_star) / denom);
        }
    }
    return rep;
}

std::vector<BoundarySample> make_boundary_samples(int d, int count, double horizon,
                                                  std::uint64_t seed) {
    if (d < 2) throw std::invalid_argument("make_boundary_samples: need d >= 2");
    auto gen = Xoshiro256pp::seeded(seed);
    std::vector<BoundarySample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        BoundarySample s;
        s.t = horizon * uniform_open01(gen);
        s.w = 0.5 + 2.0 * uniform_open01(gen);
        s.k = static_cast<int>(gen.next() % (d - 1));
        Vector y(d);
        for (int j = 0; j < d; ++j) y[j] = std::exp(standard_normal(gen));
        std::sort(y.begin(), y.end(), std::greater<>());
        y[s.k + 1] = y[s.k];  // put the sample on the collision face
        s.y = y;
        out.push_back(std::move(s));
    }
    return out;
}

double neumann_check(const CandidateFn& candidate, const std::vector<BoundarySample>& samples,
                     double fd_step) {
    double worst = 0.0;
    for (const auto& s : samples) {
        Vector yp = s.y, ym = s.y;
        yp[s.k] += fd_step;
        yp[s.k + 1] -= fd_step;
        ym[s.k] -= fd_step;
        ym[s.k + 1] += fd_step;
        const double der = (candidate(s.t, yp, s.w) - candidate(s.t, ym, s.w)) / (2.0 * fd_step);
        worst = std::max(worst, std::abs(der));
    }
    return worst;
}

std::vector<Perturbation> standard_perturbations(const ClosedFormSolution& sol, int d,
                                                 std::uint64_t seed) {
    std::vector<Perturbation> out;
    for (double ws : {0.0, 0.5, 1.5, 2.0})
        out.push_back({"weight_scale_" + io::format_double(ws), ws, {}, 1.0});
    for (double cs : {0.5, 1.5})
        out.push_back({"consumption_scale_" + io::format_double(cs), 1.0, {}, cs});
    auto gen = Xoshiro256pp::seeded(seed);
    const int lo = sol.constraint.kind == ConstraintKind::Unconstrained ? 0 : sol.constraint.lo - 1;
    const int hi = sol.constraint.kind == ConstraintKind::Unconstrained ? d - 1
                                                                        : sol.constraint.hi - 1;
    for (int i = 0; i < 4; ++i) {
        Vector shift(d, 0.0);
        if (sol.constraint.kind == ConstraintKind::FullyInvestedOpen) {
            for (int k = lo; k < hi; ++k) {
                const double amt = 0.25 * standard_normal(gen);
                shift[k] += amt;
                shift[k + 1] -= amt;
            }
            if (lo == hi) shift[lo] = 0.0;  // single-rank window has no tangent directions
        } else {
            for (int k = lo; k <= hi; ++k) shift[k] = 0.25 * standard_normal(gen);
        }
        out.push_back({"weight_shift_" + std::to_string(i + 1), 1.0, shift, 1.0});
    }
    return out;
}

std::vector<GapEntry> optimality_gap(const FirstOrderParams& model, const Preferences& prefs,
                                     const ClosedFormSolution& sol,
                                     const std::vector<Perturbation>& perturbations,
                                     const MarketState& state, const SimConfig& config) {
    prefs.require_valid();
    state.require_valid();
    SimConfig cfg = config;
    cfg.t0 = state.t;
    cfg.t1 = prefs.horizon;
    cfg.scheme = Scheme::NamedLogEuler;
    cfg.require_valid();

    std::vector<RankStrategyVariant> variants;
    variants.push_back({sol.pi_tilde_star, 1.0});  // variant 0 = optimal
    for (const auto& pert : perturbations) {
        Vector pi(sol.pi_tilde_star.size());
        for (std::size_t k = 0; k < pi.size(); ++k) {
            pi[k] = pert.weight_scale * sol.pi_tilde_star[k];
            if (!pert.weight_shift.empty()) pi[k] += pert.weight_shift[k];
        }
        variants.push_back({std::move(pi), pert.consumption_scale});
    }

    RankValueObserver obs(model, prefs, sol, std::move(variants), state.w, cfg);
    run_paths(model, state.x, cfg, obs);

    std::vector<GapEntry> table;
    const std::int64_t n = cfg.n_paths;
    for (std::size_t vi = 1; vi <= perturbations.size(); ++vi) {
        std::vector<double> diff;
        diff.reserve(n);
        std::int64_t bad = 0;
        for (std::int64_t p = 0; p < n; ++p) {
            const std::size_t s0 = obs.slot_of(p, 0);
            const std::size_t sv = obs.slot_of(p, vi);
            if (obs.dead_[s0] || obs.dead_[sv]) {
                ++bad;
                continue;
            }
            diff.push_back(obs.j_[s0] - obs.j_[sv]);
        }
        GapEntry e;
        e.name = perturbations[vi - 1].name;
        e.n_inadmissible = bad;
        const std::int64_t m = static_cast<std::int64_t>(diff.size());
        if (m > 0) e.gap = kernels::sum(diff) / m;
        if (m > 1) {
            for (auto& v : diff) v -= e.gap;
            const double var = std::max(0.0, kernels::dot(diff, diff) / (m - 1));
            e.stderr_ = std::sqrt(var / m);
        }
        table.push_back(std::move(e));
    }
    return table;
}

SpreadReport rank_invariance_check(const FirstOrderParams& model, const Preferences& prefs,
                                   const ClosedFormSolution& sol, const Vector& x0,
                                   int n_variants, double w0, const SimConfig& config) {
    SpreadReport rep;
    const StrategyFn strat = feedback_strategy(sol);
    const int d = static_cast<int>(x0.size());
    for (int v = 0; v < n_variants; ++v) {
        Vector xv(d);
        for (int j = 0; j < d; ++j) xv[j] = x0[(j + v) % d];
        SimConfig cfg = config;
        cfg.master_seed = config.master_seed + static_cast<std::uint64_t>(v);
        MarketState st{config.t0, xv, w0};
        rep.estimates.push_back(mc_value(model, prefs, strat, st, cfg));
    }
    for (std::size_t a = 0; a < rep.estimates.size(); ++a)
        for (std::size_t b = a + 1; b < rep.estimates.size(); ++b) {
            const auto& ea = rep.estimates[a];
            const auto& eb = rep.estimates[b];
            const double se = std::sqrt(ea.stderr_ * ea.stderr_ + eb.stderr_ * eb.stderr_);
            if (se > 0.0)
                rep.max_pairwise_z = std::max(rep.max_pairwise_z, std::abs(ea.mean - eb.mean) / se);
        }
    return rep;
}

namespace {

class TerminalObserver : public PathObserver {
public:
    TerminalObserver(std::int64_t n_paths, int d) : d_(d) {
        y_.assign(static_cast<std::size_t>(n_paths) * d, 0.0);
        okflag_.assign(n_paths, 1);
    }
    void on_block_end(const BlockLanes& bl) override {
        thread_local Vector tmp;
        tmp.resize(bl.d);
        for (int i = 0; i < bl.nlanes; ++i) {
            const std::int64_t p = bl.path0 + i;
            okflag_[p] = bl.alive[i];
            if (bl.rank_of_asset) {  // named scheme: sort levels into ranks
                for (int k = 0; k < bl.d; ++k) {
                    const int j = bl.asset_at_rank[static_cast<std::size_t>(k) * bl.nlanes + i];
                    tmp[k] = std::exp(bl.zlog[static_cast<std::size_t>(j) * bl.nlanes + i]);
                }
            } else {
                for (int k = 0; k < bl.d; ++k)
                    tmp[k] = std::exp(bl.zlog[static_cast<std::size_t>(k) * bl.nlanes + i]);
            }
            for (int k = 0; k < bl.d; ++k) y_[static_cast<std::size_t>(p) * d_ + k] = tmp[k];
        }
    }
    int d_;
    std::vector<double> y_;
    std::vector<std::uint8_t> okflag_;
};

}  // namespace

TerminalMoments ranked_terminal_moments(const FirstOrderParams& model, const Vector& start,
                                        const SimConfig& config) {
    TerminalObserver obs(config.n_paths, static_cast<int>(start.size()));
    run_paths(model, start, config, obs);
    const int d = static_cast<int>(start.size());
    TerminalMoments tm;
    tm.mean.resize(d);
    tm.se_mean.resize(d);
    tm.m2.resize(d);
    tm.se_m2.resize(d);
    std::vector<double> col, col2;
    for (int k = 0; k < d; ++k) {
        col.clear();
        col2.clear();
        for (std::int64_t p = 0; p < config.n_paths; ++p) {
            if (!obs.okflag_[p]) continue;
            const double y = obs.y_[static_cast<std::size_t>(p) * d + k];
            col.push_back(y);
            col2.push_back(y * y);
        }
        const std::int64_t n = static_cast<std::int64_t>(col.size());
        tm.n_paths = n;
        tm.mean[k] = kernels::sum(col) / n;
        tm.m2[k] = kernels::sum(col2) / n;
        if (n > 1) {
            for (auto& v : col) v -= tm.mean[k];
            for (auto& v : col2) v -= tm.m2[k];
            tm.se_mean[k] = std::sqrt(std::max(0.0, kernels::dot(col, col) / (n - 1)) / n);
            tm.se_m2[k] = std::sqrt(std::max(0.0, kernels::dot(col2, col2) / (n - 1)) / n);
        }
    }
    return tm;
}

}  // namespace rankfolio
