#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rankfolio/model.hpp"

namespace rankfolio {

enum class Scheme { NamedLogEuler, RankedProjectedEuler };

struct SimConfig {
    std::int64_t n_paths = 1000;
    int n_steps = 100;
    double t0 = 0.0;
    double t1 = 1.0;
    std::uint64_t master_seed = 42;
    Scheme scheme = Scheme::NamedLogEuler;
    int threads = 0;  // 0 = hardware concurrency; result is independent of this

    double step() const { return (t1 - t0) / n_steps; }
    void require_valid() const;
};

// Simulated trajectories on the time grid. Component-ordered per node:
// index (path, step, comp) -> [(path * (n_steps+1) + step) * d + comp].
// Ranked bundles carry Y and Phi; named bundles carry X and Y (Phi only
// exists for the projected scheme).
struct PathBundle {
    int d = 0;
    std::int64_t n_paths = 0;
    int n_steps = 0;
    Scheme scheme = Scheme::NamedLogEuler;
    std::uint64_t master_seed = 0;
    Vector times;
    std::vector<double> X;
    std::vector<double> Y;
    std::vector<double> Phi;
    std::vector<double> V;              // [path * (n_steps+1) + step], filled by wealth_path
    std::vector<std::uint8_t> ok;         // per path: finite all the way to T
    std::vector<std::uint8_t> admissible;  // per path: wealth stayed positive (wealth_path)

    bool has_X() const { return !X.empty(); }
    bool has_Phi() const { return !Phi.empty(); }
    bool has_V() const { return !V.empty(); }

    std::size_t node(std::int64_t p, int s) const {
        return (static_cast<std::size_t>(p) * (n_steps + 1) + s) * d;
    }
    double x(std::int64_t p, int s, int k) const { return X[node(p, s) + k]; }
    double y(std::int64_t p, int s, int k) const { return Y[node(p, s) + k]; }
    double phi(std::int64_t p, int s, int k) const { return Phi[node(p, s) + k]; }
    double v(std::int64_t p, int s) const { return V[static_cast<std::size_t>(p) * (n_steps + 1) + s]; }
};

// --- streaming engine ------------------------------------------------------
// Observers receive component-major lane arrays of length `nlanes`
// (component k, lane i at [k * nlanes + i]); lane i is global path
// `path0 + i`. Lane values are pure functions of (master_seed, path index),
// never of block shape or worker count. Observer methods are called
// concurrently for disjoint path ranges and must only touch per-path state.
struct BlockLanes {
    std::int64_t path0 = 0;
    int nlanes = 0;
    int d = 0;
    const double* zlog = nullptr;        // named scheme: named log caps; ranked scheme: ranked
    const int* rank_of_asset = nullptr;  // named scheme only
    const int* asset_at_rank = nullptr;  // named scheme only
    const std::uint8_t* alive = nullptr;
};

struct StepLanes {
    int step = 0;  // transition from node `step` to `step + 1`
    double t = 0.0;
    double h = 0.0;
    double sqrt_h = 0.0;
    std::int64_t path0 = 0;
    int nlanes = 0;
    int d = 0;
    const double* z_before = nullptr;
    const double* z_after = nullptr;       // ranked scheme: after projection
    const double* ranked_diff = nullptr;   // (sigma_tilde dB)_k lanes, unit-variance noise
    const double* ranked_mu = nullptr;     // mu_tilde_k(t, y) lanes
    const int* rank_before = nullptr;      // named scheme only
    const int* rank_after = nullptr;       // named scheme only
    const int* aar_before = nullptr;       // asset_at_rank lanes, named scheme only
    const int* aar_after = nullptr;        // named scheme only
    const double* phi_log_inc = nullptr;   // ranked scheme: projection displacement (log)
    const std::uint8_t* alive = nullptr;
};

class PathObserver {
public:
    virtual ~PathObserver() = default;
    virtual void on_block_begin(const BlockLanes&) {}
    virtual void on_step(const StepLanes&) {}
    virtual void on_block_end(const BlockLanes&) {}
};

// Drives the scheme selected in config. x0 is the named start (named
// scheme) or the ordered start y0 (ranked scheme; must be descending).
void run_paths(const FirstOrderParams& model, const Vector& x0, const SimConfig& config,
               PathObserver& observer);
void run_paths(const RankCoefficients& model, const Vector& x0, const SimConfig& config,
               PathObserver& observer);

// --- recorded simulation ----------------------------------------------------
PathBundle simulate_named(const FirstOrderParams& model, const Vector& x0, const SimConfig& config);
PathBundle simulate_named(const RankCoefficients& model, const Vector& x0, const SimConfig& config);
PathBundle simulate_ranked_reflected(const FirstOrderParams& model, const Vector& y0,
                                     const SimConfig& config);
PathBundle simulate_ranked_reflected(const RankCoefficients& model, const Vector& y0,
                                     const SimConfig& config);

// Exact Euclidean projection onto the nonincreasing cone (pool adjacent
// violators); O(d), no iteration tolerance.
void pava_nonincreasing(std::span<double> v);

// Wealth along stored named paths, reusing the recorded noise (the
// diffusion shock is recovered exactly from the stored increments, so
// strategy comparisons share random numbers). Fills bundle.V and the
// admissibility flags; returns the number of inadmissible paths.
std::int64_t wealth_path(PathBundle& bundle, const FirstOrderParams& model,
                         const StrategyFn& strategy, double w0);
// Generic-coefficient variant; the risk-free rate is passed explicitly since
// RankCoefficients only models the risky ranked dynamics.
std::int64_t wealth_path(PathBundle& bundle, const RankCoefficients& model, double r,
                         const StrategyFn& strategy, double w0);

struct LocalTimeEstimate {
    int k = 0;  // 0-based rank pair, k < l
    int l = 0;
    double epsilon = 0.0;  // bandwidth, log-price units
    double estimate = 0.0;  // accumulated level local time of Y_k - Y_l at 0
    double stderr_ = 0.0;
    std::int64_t n_paths = 0;
    bool bandwidth_warning = false;  // epsilon below the typical step displacement
};

LocalTimeEstimate estimate_local_time(const PathBundle& bundle, const FirstOrderParams& model,
                                      int k, int l, double epsilon);
LocalTimeEstimate estimate_local_time(const PathBundle& bundle, const RankCoefficients& model,
                                      int k, int l, double epsilon);

// Per-path reflection reconstruction from occupation-time local time
// estimates of all pairs; N_k counts ties within 1e-12 in log.
struct ReflectionReconstruction {
    double epsilon = 0.0;
    std::int64_t n_paths = 0;
    int d = 0;
    std::vector<double> phi_terminal;  // [path * d + rank], level units
    std::vector<double> phi_over_y;    // [path * d + rank], integral of dPhi / Y
};

ReflectionReconstruction reflection_from_local_times(const PathBundle& bundle,
                                                     const FirstOrderParams& model,
                                                     double epsilon);
ReflectionReconstruction reflection_from_local_times(const PathBundle& bundle,
                                                     const RankCoefficients& model,
                                                     double epsilon);

}  // namespace rankfolio
