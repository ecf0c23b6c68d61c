#include "rankfolio/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "rankfolio/kernels.hpp"
#include "rankfolio/rng.hpp"

namespace rankfolio {

namespace {
constexpr int kBlock = 512;
constexpr double kTieLogTol = 1e-12;
}  // namespace

void SimConfig::require_valid() const {
    if (n_paths < 1) throw std::invalid_argument("sim: n_paths must be >= 1");
    if (n_steps < 1) throw std::invalid_argument("sim: n_steps must be >= 1");
    if (!(t0 < t1)) throw std::invalid_argument("sim: need t0 < t1");
    if (!(step() > 0.0)) throw std::invalid_argument("sim: step size must be positive");
}

void pava_nonincreasing(std::span<double> v) {
    const int n = static_cast<int>(v.size());
    if (n <= 1) return;
    // blocks as (sum, count), merged while the nonincreasing constraint is violated
    thread_local std::vector<double> sum;
    thread_local std::vector<int> cnt;
    sum.clear();
    cnt.clear();
    for (int i = 0; i < n; ++i) {
        sum.push_back(v[i]);
        cnt.push_back(1);
        while (sum.size() > 1) {
            const std::size_t m = sum.size();
            if (sum[m - 2] * cnt[m - 1] < sum[m - 1] * cnt[m - 2]) {
                sum[m - 2] += sum[m - 1];
                cnt[m - 2] += cnt[m - 1];
                sum.pop_back();
                cnt.pop_back();
            } else {
                break;
            }
        }
    }
    int pos = 0;
    for (std::size_t b = 0; b < sum.size(); ++b) {
        const double mean = sum[b] / cnt[b];
        for (int j = 0; j < cnt[b]; ++j) v[pos++] = mean;
    }
}

// --- coefficient providers ---------------------------------------------------

namespace {

// Constant per-rank coefficients: the ranked-space increment lanes are
// shared across the whole block, so the d^2 accumulation runs through the
// vector kernels.
struct ConstantCoeffs {
    static constexpr bool kConstant = true;
    const FirstOrderParams& model;
    Vector drift;  // mu_k - a_kk / 2

    explicit ConstantCoeffs(const FirstOrderParams& m) : model(m) {
        const Matrix a = m.a_tilde();
        drift.resize(m.d);
        for (int k = 0; k < m.d; ++k) drift[k] = m.mu_tilde[k] - 0.5 * a(k, k);
    }
    int d() const { return model.d; }
};

struct CallableCoeffs {
    static constexpr bool kConstant = false;
    const RankCoefficients& model;
    explicit CallableCoeffs(const RankCoefficients& m) : model(m) {
        if (m.d < 1 || !m.mu_fn || !m.sigma_fn)
            throw std::invalid_argument("rank coefficients: missing evaluator");
    }
    int d() const { return model.d; }
};

struct WorkerBuffers {
    std::vector<double> za, zb, wn, db, diff, mu_lanes, drift_lanes, phi_inc, tmp, tmp2;
    std::vector<int> roa_a, roa_b, aar_a, aar_b, ti, tj;
    std::vector<std::uint8_t> alive;
    std::vector<Xoshiro256pp> rng;

    WorkerBuffers(int d, int block) {
        const std::size_t n = static_cast<std::size_t>(d) * block;
        za.resize(n);
        zb.resize(n);
        wn.resize(n);
        db.resize(n);
        diff.resize(n);
        mu_lanes.resize(n);
        drift_lanes.resize(n);
        phi_inc.resize(n);
        tmp.resize(d);
        tmp2.resize(d);
        roa_a.resize(n);
        roa_b.resize(n);
        aar_a.resize(n);
        aar_b.resize(n);
        ti.resize(d);
        tj.resize(d);
        alive.resize(block);
        rng.resize(block);
    }
};

// Fills diff lanes (sigma dB) and mu/drift lanes for one step.
template <class Provider>
void eval_coeffs(const Provider& prov, double t, int bs, const double* z_sorted_logs,
                 const int* aar, bool z_is_ranked, WorkerBuffers& wb) {
    const int d = prov.d();
    if constexpr (Provider::kConstant) {
        (void)t;
        (void)z_sorted_logs;
        (void)aar;
        (void)z_is_ranked;
        const Matrix& sigma = prov.model.sigma_tilde;
        for (int k = 0; k < d; ++k) {
            std::span<double> diff_k(wb.diff.data() + static_cast<std::size_t>(k) * bs, bs);
            std::fill(diff_k.begin(), diff_k.end(), 0.0);
            for (int l = 0; l < d; ++l)
                kernels::axpy(diff_k,
                              std::span<const double>(
                                  wb.db.data() + static_cast<std::size_t>(l) * bs, bs),
                              sigma(k, l));
        }
    } else {
        Vector y(d);
        for (int i = 0; i < bs; ++i) {
            if (!wb.alive[i]) continue;
            for (int k = 0; k < d; ++k) {
                const double zl =
                    z_is_ranked ? z_sorted_logs[static_cast<std::size_t>(k) * bs + i]
                                : z_sorted_logs[static_cast<std::size_t>(
                                                    aar[static_cast<std::size_t>(k) * bs + i]) *
                                                    bs +
                                                i];
                y[k] = std::exp(zl);
            }
            const Vector mu = prov.model.mu_fn(t, y);
            const Matrix sig = prov.model.sigma_fn(t, y);
            for (int k = 0; k < d; ++k) {
                double acc = 0.0;
                double akk = 0.0;
                for (int l = 0; l < d; ++l) {
                    acc = std::fma(sig(k, l), wb.db[static_cast<std::size_t>(l) * bs + i], acc);
                    akk = std::fma(sig(k, l), sig(k, l), akk);
                }
                wb.diff[static_cast<std::size_t>(k) * bs + i] = acc;
                wb.mu_lanes[static_cast<std::size_t>(k) * bs + i] = mu[k];
                wb.drift_lanes[static_cast<std::size_t>(k) * bs + i] = mu[k] - 0.5 * akk;
            }
        }
    }
}

template <class Provider>
void named_worker(const Provider& prov, const Vector& x0, const SimConfig& cfg,
                  PathObserver& obs, std::int64_t begin, std::int64_t end) {
    const int d = prov.d();
    const double h = cfg.step();
    const double sqrt_h = std::sqrt(h);
    WorkerBuffers wb(d, kBlock);

    Vector x0_log(d);
    for (int k = 0; k < d; ++k) x0_log[k] = std::log(x0[k]);
    Ranking rk0 = rank_of(x0);

    Vector drift_h;
    if constexpr (Provider::kConstant) {
        drift_h.resize(d);
        for (int k = 0; k < d; ++k) drift_h[k] = prov.drift[k] * h;
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < kBlock; ++i)
                wb.mu_lanes[static_cast<std::size_t>(k) * kBlock + i] = prov.model.mu_tilde[k];
    }

    for (std::int64_t p0 = begin; p0 < end; p0 += kBlock) {
        const int bs = static_cast<int>(std::min<std::int64_t>(kBlock, end - p0));
        for (int i = 0; i < bs; ++i) {
            wb.rng[i] = path_rng(cfg.master_seed, static_cast<std::uint64_t>(p0 + i));
            wb.alive[i] = 1;
        }
        if constexpr (Provider::kConstant) {
            if (bs != kBlock)
                for (int k = 0; k < d; ++k)
                    for (int i = 0; i < bs; ++i)
                        wb.mu_lanes[static_cast<std::size_t>(k) * bs + i] = prov.model.mu_tilde[k];
        }
        double* z = wb.za.data();
        double* zn = wb.zb.data();
        int* roa = wb.roa_a.data();
        int* roa_n = wb.roa_b.data();
        int* aar = wb.aar_a.data();
        int* aar_n = wb.aar_b.data();
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < bs; ++i) {
                z[static_cast<std::size_t>(k) * bs + i] = x0_log[k];
                roa[static_cast<std::size_t>(k) * bs + i] = rk0.rank_of_asset[k];
                aar[static_cast<std::size_t>(k) * bs + i] = rk0.asset_at_rank[k];
            }

        BlockLanes head{p0, bs, d, z, roa, aar, wb.alive.data()};
        obs.on_block_begin(head);

        for (int s = 0; s < cfg.n_steps; ++s) {
            const double t = cfg.t0 + s * h;
            // named-order draws, one stream per path
            for (int i = 0; i < bs; ++i) {
                auto& g = wb.rng[i];
                for (int j = 0; j < d; ++j)
                    wb.wn[static_cast<std::size_t>(j) * bs + i] = standard_normal(g);
            }
            // ranked Brownian increments: dB_l = dW_{asset at rank l}
            for (int l = 0; l < d; ++l)
                for (int i = 0; i < bs; ++i)
                    wb.db[static_cast<std::size_t>(l) * bs + i] =
                        wb.wn[static_cast<std::size_t>(aar[static_cast<std::size_t>(l) * bs + i]) *
                                  bs +
                              i];

            eval_coeffs(prov, t, bs, z, aar, false, wb);

            for (int i = 0; i < bs; ++i) {
                if (!wb.alive[i]) {
                    for (int j = 0; j < d; ++j) {
                        const std::size_t ji = static_cast<std::size_t>(j) * bs + i;
                        zn[ji] = z[ji];
                        roa_n[ji] = roa[ji];
                        aar_n[ji] = aar[ji];
                    }
                    continue;
                }
                bool finite = true;
                for (int j = 0; j < d; ++j) {
                    const std::size_t ji = static_cast<std::size_t>(j) * bs + i;
                    const int k = roa[ji];
                    const std::size_t ki = static_cast<std::size_t>(k) * bs + i;
                    const double dh = Provider::kConstant ? drift_h[k] : wb.drift_lanes[ki] * h;
                    zn[ji] = std::fma(sqrt_h, wb.diff[ki], z[ji] + dh);
                    finite = finite && std::isfinite(zn[ji]) && std::abs(zn[ji]) <= 700.0;
                }
                if (!finite) {
                    wb.alive[i] = 0;
                    for (int j = 0; j < d; ++j) {
                        const std::size_t ji = static_cast<std::size_t>(j) * bs + i;
                        zn[ji] = z[ji];
                        roa_n[ji] = roa[ji];
                        aar_n[ji] = aar[ji];
                    }
                    continue;
                }
                for (int j = 0; j < d; ++j) wb.tmp[j] = zn[static_cast<std::size_t>(j) * bs + i];
                rank_into(wb.tmp, wb.ti, wb.tj, wb.tmp2);
                for (int j = 0; j < d; ++j) {
                    roa_n[static_cast<std::size_t>(j) * bs + i] = wb.ti[j];
                    aar_n[static_cast<std::size_t>(j) * bs + i] = wb.tj[j];
                }
            }

            StepLanes lanes;
            lanes.step = s;
            lanes.t = t;
            lanes.h = h;
            lanes.sqrt_h = sqrt_h;
            lanes.path0 = p0;
            lanes.nlanes = bs;
            lanes.d = d;
            lanes.z_before = z;
            lanes.z_after = zn;
            lanes.ranked_diff = wb.diff.data();
            lanes.ranked_mu = wb.mu_lanes.data();
            lanes.rank_before = roa;
            lanes.rank_after = roa_n;
            lanes.aar_before = aar;
            lanes.aar_after = aar_n;
            lanes.phi_log_inc = nullptr;
            lanes.alive = wb.alive.data();
            obs.on_step(lanes);

            std::swap(z, zn);
            std::swap(roa, roa_n);
            std::swap(aar, aar_n);
        }
        BlockLanes tail{p0, bs, d, z, roa, aar, wb.alive.data()};
        obs.on_block_end(tail);
    }
}

template <class Provider>
void ranked_worker(const Provider& prov, const Vector& y0, const SimConfig& cfg,
                   PathObserver& obs, std::int64_t begin, std::int64_t end) {
    const int d = prov.d();
    const double h = cfg.step();
    const double sqrt_h = std::sqrt(h);
    WorkerBuffers wb(d, kBlock);

    Vector y0_log(d);
    for (int k = 0; k < d; ++k) y0_log[k] = std::log(y0[k]);

    Vector drift_h;
    if constexpr (Provider::kConstant) {
        drift_h.resize(d);
        for (int k = 0; k < d; ++k) drift_h[k] = prov.drift[k] * h;
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < kBlock; ++i)
                wb.mu_lanes[static_cast<std::size_t>(k) * kBlock + i] = prov.model.mu_tilde[k];
    }

    for (std::int64_t p0 = begin; p0 < end; p0 += kBlock) {
        const int bs = static_cast<int>(std::min<std::int64_t>(kBlock, end - p0));
        for (int i = 0; i < bs; ++i) {
            wb.rng[i] = path_rng(cfg.master_seed, static_cast<std::uint64_t>(p0 + i));
            wb.alive[i] = 1;
        }
        if constexpr (Provider::kConstant) {
            if (bs != kBlock)
                for (int k = 0; k < d; ++k)
                    for (int i = 0; i < bs; ++i)
                        wb.mu_lanes[static_cast<std::size_t>(k) * bs + i] = prov.model.mu_tilde[k];
        }
        double* z = wb.za.data();
        double* zn = wb.zb.data();
        for (int k = 0; k < d; ++k)
            for (int i = 0; i < bs; ++i) z[static_cast<std::size_t>(k) * bs + i] = y0_log[k];

        BlockLanes head{p0, bs, d, z, nullptr, nullptr, wb.alive.data()};
        obs.on_block_begin(head);

        for (int s = 0; s < cfg.n_steps; ++s) {
            const double t = cfg.t0 + s * h;
            // ranked draws directly
            for (int i = 0; i < bs; ++i) {
                auto& g = wb.rng[i];
                for (int l = 0; l < d; ++l)
                    wb.db[static_cast<std::size_t>(l) * bs + i] = standard_normal(g);
            }
            eval_coeffs(prov, t, bs, z, nullptr, true, wb);

            // unconstrained proposal
            if constexpr (Provider::kConstant) {
                std::memcpy(zn, z, static_cast<std::size_t>(d) * bs * sizeof(double));
                for (int k = 0; k < d; ++k)
                    kernels::advance(
                        std::span<double>(zn + static_cast<std::size_t>(k) * bs, bs),
                        std::span<const double>(wb.diff.data() + static_cast<std::size_t>(k) * bs,
                                                bs),
                        sqrt_h, drift_h[k]);
            } else {
                for (int i = 0; i < bs; ++i)
                    for (int k = 0; k < d; ++k) {
                        const std::size_t ki = static_cast<std::size_t>(k) * bs + i;
                        zn[ki] = wb.alive[i] ? std::fma(sqrt_h, wb.diff[ki],
                                                        z[ki] + wb.drift_lanes[ki] * h)
                                             : z[ki];
                    }
            }

            // project onto the ordered cone, accumulate the displacement
            for (int i = 0; i < bs; ++i) {
                if (!wb.alive[i]) {
                    for (int k = 0; k < d; ++k) {
                        const std::size_t ki = static_cast<std::size_t>(k) * bs + i;
                        zn[ki] = z[ki];
                        wb.phi_inc[ki] = 0.0;
                    }
                    continue;
                }
                bool finite = true;
                for (int k = 0; k < d; ++k) {
                    wb.tmp[k] = zn[static_cast<std::size_t>(k) * bs + i];
                    finite = finite && std::isfinite(wb.tmp[k]) && std::abs(wb.tmp[k]) <= 700.0;
                }
                if (!finite) {
                    wb.alive[i] = 0;
                    for (int k = 0; k < d; ++k) {
                        zn[static_cast<std::size_t>(k) * bs + i] =
                            z[static_cast<std::size_t>(k) * bs + i];
                        wb.phi_inc[static_cast<std::size_t>(k) * bs + i] = 0.0;
                    }
                    continue;
                }
                std::copy(wb.tmp.begin(), wb.tmp.end(), wb.tmp2.begin());
                pava_nonincreasing(std::span<double>(wb.tmp2.data(), d));
                for (int k = 0; k < d; ++k) {
                    const std::size_t ki = static_cast<std::size_t>(k) * bs + i;
                    wb.phi_inc[ki] = wb.tmp2[k] - wb.tmp[k];
                    zn[ki] = wb.tmp2[k];
                }
            }

            StepLanes lanes;
            lanes.step = s;
            lanes.t = t;
            lanes.h = h;
            lanes.sqrt_h = sqrt_h;
            lanes.path0 = p0;
            lanes.nlanes = bs;
            lanes.d = d;
            lanes.z_before = z;
            lanes.z_after = zn;
            lanes.ranked_diff = wb.diff.data();
            lanes.ranked_mu = wb.mu_lanes.data();
            lanes.phi_log_inc = wb.phi_inc.data();
            lanes.alive = wb.alive.data();
            obs.on_step(lanes);

            std::swap(z, zn);
        }
        BlockLanes tail{p0, bs, d, z, nullptr, nullptr, wb.alive.data()};
        obs.on_block_end(tail);
    }
}

template <class Provider>
void run_scheme(const Provider& prov, const Vector& x0, const SimConfig& cfg, PathObserver& obs) {
    cfg.require_valid();
    if (static_cast<int>(x0.size()) != prov.d())
        throw std::invalid_argument("run_paths: start vector has wrong dimension");
    for (double v : x0)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error("run_paths: start values must be strictly positive");
    if (cfg.scheme == Scheme::RankedProjectedEuler) {
        for (std::size_t k = 1; k < x0.size(); ++k)
            if (x0[k] > x0[k - 1])
                throw std::domain_error("run_paths: ranked start must be ordered descending");
    }

    unsigned hw = std::thread::hardware_concurrency();
    int nt = cfg.threads > 0 ? cfg.threads : static_cast<int>(hw ? hw : 1);
    nt = static_cast<int>(std::min<std::int64_t>(nt, cfg.n_paths));
    nt = std::max(nt, 1);

    auto run_range = [&](std::int64_t b, std::int64_t e) {
        if (cfg.scheme == Scheme::NamedLogEuler)
            named_worker(prov, x0, cfg, obs, b, e);
        else
            ranked_worker(prov, x0, cfg, obs, b, e);
    };

    if (nt == 1) {
        run_range(0, cfg.n_paths);
        return;
    }
    const std::int64_t chunk = (cfg.n_paths + nt - 1) / nt;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nt);
    for (int w = 0; w < nt; ++w) {
        const std::int64_t b = w * chunk;
        const std::int64_t e = std::min<std::int64_t>(b + chunk, cfg.n_paths);
        if (b >= e) break;
        pool.emplace_back([&, b, e, w] {
            try {
                run_range(b, e);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& ep : errs)
        if (ep) std::rethrow_exception(ep);
}

// --- bundle recorder ---------------------------------------------------------

class BundleRecorder : public PathObserver {
public:
    BundleRecorder(PathBundle& b, bool named) : b_(b), named_(named) {}

    void on_block_begin(const BlockLanes& bl) override {
        for (int i = 0; i < bl.nlanes; ++i) write_node(bl, 0, i, nullptr);
    }
    void on_step(const StepLanes& st) override {
        BlockLanes bl{st.path0, st.nlanes, st.d, st.z_after, st.rank_after, st.aar_after,
                      st.alive};
        for (int i = 0; i < st.nlanes; ++i) write_node(bl, st.step + 1, i, &st);
    }
    void on_block_end(const BlockLanes& bl) override {
        for (int i = 0; i < bl.nlanes; ++i) b_.ok[bl.path0 + i] = bl.alive[i];
    }

private:
    void write_node(const BlockLanes& bl, int s, int i, const StepLanes* st) {
        const std::int64_t p = bl.path0 + i;
        const std::size_t base = b_.node(p, s);
        const int d = bl.d;
        if (named_) {
            for (int j = 0; j < d; ++j) {
                const double xv = std::exp(bl.zlog[static_cast<std::size_t>(j) * bl.nlanes + i]);
                b_.X[base + j] = xv;
            }
            for (int k = 0; k < d; ++k) {
                const int j = bl.asset_at_rank[static_cast<std::size_t>(k) * bl.nlanes + i];
                b_.Y[base + k] = b_.X[base + j];
            }
        } else {
            for (int k = 0; k < d; ++k) {
                const double ynew = std::exp(bl.zlog[static_cast<std::size_t>(k) * bl.nlanes + i]);
                b_.Y[base + k] = ynew;
                if (s == 0) {
                    b_.Phi[base + k] = 0.0;
                } else {
                    const double inc_log =
                        st->phi_log_inc[static_cast<std::size_t>(k) * bl.nlanes + i];
                    const double y_prop = std::exp(
                        st->z_after[static_cast<std::size_t>(k) * bl.nlanes + i] - inc_log);
                    b_.Phi[base + k] = b_.Phi[b_.node(p, s - 1) + k] + (ynew - y_prop);
                }
            }
        }
    }

    PathBundle& b_;
    bool named_;
};

PathBundle make_bundle(int d, const SimConfig& cfg, bool named) {
    const std::size_t nodes =
        static_cast<std::size_t>(cfg.n_paths) * (cfg.n_steps + 1) * static_cast<std::size_t>(d);
    if (nodes > (std::size_t(1) << 31))
        throw std::invalid_argument(
            "simulate: bundle too large to store; use the streaming interface");
    PathBundle b;
    b.d = d;
    b.n_paths = cfg.n_paths;
    b.n_steps = cfg.n_steps;
    b.scheme = cfg.scheme;
    b.master_seed = cfg.master_seed;
    b.times.resize(cfg.n_steps + 1);
    for (int s = 0; s <= cfg.n_steps; ++s) b.times[s] = cfg.t0 + s * cfg.step();
    b.times[cfg.n_steps] = cfg.t1;
    b.Y.assign(nodes, 0.0);
    if (named)
        b.X.assign(nodes, 0.0);
    else
        b.Phi.assign(nodes, 0.0);
    b.ok.assign(cfg.n_paths, 1);
    return b;
}

template <class Model>
PathBundle simulate_named_impl(const Model& model, const Vector& x0, SimConfig cfg) {
    cfg.scheme = Scheme::NamedLogEuler;
    PathBundle b = make_bundle(static_cast<int>(x0.size()), cfg, true);
    BundleRecorder rec(b, true);
    run_paths(model, x0, cfg, rec);
    return b;
}

template <class Model>
PathBundle simulate_ranked_impl(const Model& model, const Vector& y0, SimConfig cfg) {
    cfg.scheme = Scheme::RankedProjectedEuler;
    PathBundle b = make_bundle(static_cast<int>(y0.size()), cfg, false);
    BundleRecorder rec(b, false);
    run_paths(model, y0, cfg, rec);
    return b;
}

}  // namespace

void run_paths(const FirstOrderParams& model, const Vector& x0, const SimConfig& config,
               PathObserver& observer) {
    run_scheme(ConstantCoeffs(model), x0, config, observer);
}

void run_paths(const RankCoefficients& model, const Vector& x0, const SimConfig& config,
               PathObserver& observer) {
    run_scheme(CallableCoeffs(model), x0, config, observer);
}

PathBundle simulate_named(const FirstOrderParams& model, const Vector& x0,
                          const SimConfig& config) {
    return simulate_named_impl(model, x0, config);
}
PathBundle simulate_named(const RankCoefficients& model, const Vector& x0,
                          const SimConfig& config) {
    return simulate_named_impl(model, x0, config);
}
PathBundle simulate_ranked_reflected(const FirstOrderParams& model, const Vector& y0,
                                     const SimConfig& config) {
    return simulate_ranked_impl(model, y0, config);
}
PathBundle simulate_ranked_reflected(const RankCoefficients& model, const Vector& y0,
                                     const SimConfig& config) {
    return simulate_ranked_impl(model, y0, config);
}

// --- wealth on stored paths --------------------------------------------------

namespace {

// coeffs(t, sorted levels, per-rank mu out, per-rank a_kk out)
using RankedDriftFn =
    std::function<void(double, const Vector&, Vector&, Vector&)>;

std::int64_t wealth_path_impl(PathBundle& bundle, double r, const RankedDriftFn& coeffs,
                              const StrategyFn& strategy, double w0) {
    if (!bundle.has_X())
        throw std::invalid_argument("wealth_path: bundle has no named paths; wealth evolution "
                                    "needs the named scheme");
    if (!(w0 > 0.0)) throw std::domain_error("wealth_path: w0 must be positive");
    const int d = bundle.d;
    const int ns = bundle.n_steps;
    bundle.V.assign(static_cast<std::size_t>(bundle.n_paths) * (ns + 1), 0.0);
    bundle.admissible.assign(bundle.n_paths, 1);

    Vector x(d), pi(d), mu(d), akk(d);
    std::vector<int> roa(d), aar(d);
    Vector sorted(d);
    std::int64_t bad = 0;

    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        double v = w0;
        bundle.V[static_cast<std::size_t>(p) * (ns + 1)] = v;
        bool adm = true;
        for (int s = 0; s < ns; ++s) {
            if (!adm) {
                bundle.V[static_cast<std::size_t>(p) * (ns + 1) + s + 1] = v;
                continue;
            }
            const double t = bundle.times[s];
            const double h = bundle.times[s + 1] - bundle.times[s];
            const std::size_t base = bundle.node(p, s);
            const std::size_t next = bundle.node(p, s + 1);
            for (int j = 0; j < d; ++j) x[j] = bundle.X[base + j];
            rank_into(x, roa, aar, sorted);
            coeffs(t, sorted, mu, akk);
            double c = 0.0;
            try {
                strategy(t, x, v, pi, c);
            } catch (const std::exception& e) {
                throw std::runtime_error("wealth_path: strategy failed on path " +
                                         std::to_string(p) + ": " + e.what());
            }
            double excess_drift = 0.0, shock = 0.0;
            for (int j = 0; j < d; ++j) {
                const int k = roa[j];
                excess_drift += pi[j] * (mu[k] - r);
                const double dlog = std::log(bundle.X[next + j]) - std::log(bundle.X[base + j]);
                const double sdw = dlog - (mu[k] - 0.5 * akk[k]) * h;
                shock += pi[j] * sdw;
            }
            const double vn = v + v * (r + excess_drift) * h - c * h + v * shock;
            bundle.V[static_cast<std::size_t>(p) * (ns + 1) + s + 1] = vn;
            if (!(vn > 0.0) || !std::isfinite(vn)) {
                adm = false;
                ++bad;
            }
            v = vn;
        }
        bundle.admissible[p] = adm ? 1 : 0;
    }
    return bad;
}

}  // namespace

std::int64_t wealth_path(PathBundle& bundle, const FirstOrderParams& model,
                         const StrategyFn& strategy, double w0) {
    const Matrix a = model.a_tilde();
    const RankedDriftFn constant = [&model, &a](double, const Vector&, Vector& mu, Vector& akk) {
        for (int k = 0; k < model.d; ++k) {
            mu[k] = model.mu_tilde[k];
            akk[k] = a(k, k);
        }
    };
    return wealth_path_impl(bundle, model.r, constant, strategy, w0);
}

std::int64_t wealth_path(PathBundle& bundle, const RankCoefficients& model, double r,
                         const StrategyFn& strategy, double w0) {
    const RankedDriftFn generic = [&model](double t, const Vector& y, Vector& mu, Vector& akk) {
        const Vector m = model.mu_fn(t, y);
        const Matrix sig = model.sigma_fn(t, y);
        for (int k = 0; k < model.d; ++k) {
            mu[k] = m[k];
            double acc = 0.0;
            for (int l = 0; l < model.d; ++l) acc += sig(k, l) * sig(k, l);
            akk[k] = acc;
        }
    };
    return wealth_path_impl(bundle, r, generic, strategy, w0);
}

// --- local time --------------------------------------------------------------

namespace {

// Occupation-time increment of the level local time of Y_k - Y_l over one
// step: window on the log difference (epsilon in log units), level bracket
// rescaled by the local level scale, so the estimate is in level units.
inline double local_time_step(double yk, double yl, double akk, double akl, double all,
                              double epsilon, double h) {
    const double g = std::log(yk) - std::log(yl);
    if (std::abs(g) > epsilon) return 0.0;
    const double bracket = yk * yk * akk - 2.0 * yk * yl * akl + yl * yl * all;
    const double eps_level = epsilon * 0.5 * (yk + yl);
    return bracket * h / (2.0 * eps_level);
}

}  // namespace

namespace {

// a-matrix entries for the pair at a grid node; constant models bind a
// precomputed matrix, generic models evaluate sigma at (t, y).
using PairBracketFn = std::function<void(double t, const Vector& y, int k, int l, double& akk,
                                         double& akl, double& all)>;

LocalTimeEstimate estimate_local_time_impl(const PathBundle& bundle, int k, int l,
                                           double epsilon, double a_diff_rate,
                                           const PairBracketFn& entries) {
    if (!(k >= 0 && k < l && l < bundle.d))
        throw std::invalid_argument("estimate_local_time: need 0 <= k < l < d");
    if (!(epsilon > 0.0)) throw std::invalid_argument("estimate_local_time: epsilon must be > 0");

    LocalTimeEstimate out;
    out.k = k;
    out.l = l;
    out.epsilon = epsilon;
    const double h = bundle.times[1] - bundle.times[0];
    out.bandwidth_warning = epsilon < std::sqrt(a_diff_rate * h);

    Vector y(bundle.d);
    double sum = 0.0, sumsq = 0.0;
    std::int64_t n = 0;
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.ok[p]) continue;
        double acc = 0.0;
        for (int s = 0; s < bundle.n_steps; ++s) {
            const std::size_t base = bundle.node(p, s);
            const double hs = bundle.times[s + 1] - bundle.times[s];
            for (int j = 0; j < bundle.d; ++j) y[j] = bundle.Y[base + j];
            double akk, akl, all;
            entries(bundle.times[s], y, k, l, akk, akl, all);
            acc += local_time_step(y[k], y[l], akk, akl, all, epsilon, hs);
        }
        sum += acc;
        sumsq += acc * acc;
        ++n;
    }
    out.n_paths = n;
    if (n > 0) out.estimate = sum / n;
    if (n > 1) out.stderr_ = std::sqrt(std::max(0.0, (sumsq / n - out.estimate * out.estimate) /
                                                         (n - 1)));
    return out;
}

}  // namespace

LocalTimeEstimate estimate_local_time(const PathBundle& bundle, const FirstOrderParams& model,
                                      int k, int l, double epsilon) {
    const Matrix a = model.a_tilde();
    const PairBracketFn entries = [&a](double, const Vector&, int kk, int ll, double& akk,
                                       double& akl, double& all) {
        akk = a(kk, kk);
        akl = a(kk, ll);
        all = a(ll, ll);
    };
    const double rate = (k >= 0 && l < model.d && k < l)
                            ? a(k, k) - 2.0 * a(k, l) + a(l, l)
                            : 0.0;
    return estimate_local_time_impl(bundle, k, l, epsilon, rate, entries);
}

LocalTimeEstimate estimate_local_time(const PathBundle& bundle, const RankCoefficients& model,
                                      int k, int l, double epsilon) {
    const PairBracketFn entries = [&model](double t, const Vector& y, int kk, int ll, double& akk,
                                           double& akl, double& all) {
        const Matrix sig = model.sigma_fn(t, y);
        akk = akl = all = 0.0;
        for (int j = 0; j < model.d; ++j) {
            akk += sig(kk, j) * sig(kk, j);
            akl += sig(kk, j) * sig(ll, j);
            all += sig(ll, j) * sig(ll, j);
        }
    };
    // probe the bandwidth warning at the starting state
    double rate = 0.0;
    if (bundle.n_paths > 0 && k >= 0 && k < l && l < bundle.d) {
        Vector y0(bundle.d);
        for (int j = 0; j < bundle.d; ++j) y0[j] = bundle.Y[bundle.node(0, 0) + j];
        double akk, akl, all;
        entries(bundle.times[0], y0, k, l, akk, akl, all);
        rate = akk - 2.0 * akl + all;
    }
    return estimate_local_time_impl(bundle, k, l, epsilon, rate, entries);
}

namespace {

using NodeMatrixFn = std::function<const Matrix&(double t, const Vector& y)>;

ReflectionReconstruction reflection_impl(const PathBundle& bundle, double epsilon,
                                         const NodeMatrixFn& a_at) {
    if (bundle.Y.empty())
        throw std::invalid_argument("reflection_from_local_times: bundle has no ranked paths");
    if (!(epsilon > 0.0))
        throw std::invalid_argument("reflection_from_local_times: epsilon must be > 0");
    const int d = bundle.d;

    ReflectionReconstruction rec;
    rec.epsilon = epsilon;
    rec.n_paths = bundle.n_paths;
    rec.d = d;
    rec.phi_terminal.assign(static_cast<std::size_t>(bundle.n_paths) * d, 0.0);
    rec.phi_over_y.assign(static_cast<std::size_t>(bundle.n_paths) * d, 0.0);

    std::vector<int> nk(d);
    Vector ynode(d);
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.ok[p]) continue;
        for (int s = 0; s < bundle.n_steps; ++s) {
            const std::size_t base = bundle.node(p, s);
            const double hs = bundle.times[s + 1] - bundle.times[s];
            for (int j = 0; j < d; ++j) ynode[j] = bundle.Y[base + j];
            const Matrix& a = a_at(bundle.times[s], ynode);
            // N_k: ties within 1e-12 in log at this node
            for (int k = 0; k < d; ++k) {
                int cnt = 1;
                const double lk = std::log(bundle.Y[base + k]);
                for (int j = k - 1; j >= 0 && std::log(bundle.Y[base + j]) - lk <= kTieLogTol; --j)
                    ++cnt;
                for (int j = k + 1; j < d && lk - std::log(bundle.Y[base + j]) <= kTieLogTol; ++j)
                    ++cnt;
                nk[k] = cnt;
            }
            for (int k = 0; k < d; ++k) {
                double inc = 0.0;
                for (int l = k + 1; l < d; ++l)
                    inc += 0.5 / nk[k] *
                           local_time_step(bundle.Y[base + k], bundle.Y[base + l], a(k, k),
                                           a(k, l), a(l, l), epsilon, hs);
                for (int l = 0; l < k; ++l)
                    inc -= 0.5 / nk[k] *
                           local_time_step(bundle.Y[base + l], bundle.Y[base + k], a(l, l),
                                           a(l, k), a(k, k), epsilon, hs);
                rec.phi_terminal[static_cast<std::size_t>(p) * d + k] += inc;
                rec.phi_over_y[static_cast<std::size_t>(p) * d + k] +=
                    inc / bundle.Y[base + k];
            }
        }
    }
    return rec;
}

}  // namespace

ReflectionReconstruction reflection_from_local_times(const PathBundle& bundle,
                                                     const FirstOrderParams& model,
                                                     double epsilon) {
    const Matrix a = model.a_tilde();
    const NodeMatrixFn constant = [&a](double, const Vector&) -> const Matrix& { return a; };
    return reflection_impl(bundle, epsilon, constant);
}

ReflectionReconstruction reflection_from_local_times(const PathBundle& bundle,
                                                     const RankCoefficients& model,
                                                     double epsilon) {
    Matrix scratch;
    const NodeMatrixFn generic = [&model, &scratch](double t, const Vector& y) -> const Matrix& {
        const Matrix sig = model.sigma_fn(t, y);
        scratch = matmul(sig, transpose(sig));
        return scratch;
    };
    return reflection_impl(bundle, epsilon, generic);
}

}  // namespace rankfolio
