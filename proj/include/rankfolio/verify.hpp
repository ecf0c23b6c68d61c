#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rankfolio/dynamics.hpp"
#include "rankfolio/strategy.hpp"

namespace rankfolio {

struct ValueEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::int64_t n_paths = 0;
    std::int64_t n_inadmissible = 0;
    bool reliable = true;  // false when > 0.1% of paths lost admissibility
    std::uint64_t fingerprint = 0;
};

// Monte Carlo estimate of E[int_t^T e^{-beta s} U(c(s)) ds + U(V(T))]
// under the given feedback strategy, streaming over paths (nothing stored).
// Consumption integral by trapezoid on the simulation grid; paths with
// nonpositive wealth are flagged, excluded and counted.
ValueEstimate mc_value(const FirstOrderParams& model, const Preferences& prefs,
                       const StrategyFn& strategy, const MarketState& state,
                       const SimConfig& config);
// Generic-coefficient variant with an explicit risk-free rate.
ValueEstimate mc_value(const RankCoefficients& model, double r, const Preferences& prefs,
                       const StrategyFn& strategy, const MarketState& state,
                       const SimConfig& config);

struct HjbGrid {
    int nt = 50;
    int nw = 50;
    double w_lo = 0.25;
    double w_hi = 4.0;
};

struct ResidualReport {
    double max_normalized_residual = 0.0;  // max |HJB residual| / |dv/dt| over the grid
    double argmax_t = 0.0;
    double argmax_w = 0.0;
    double terminal_gap = 0.0;            // max |v(T, w) - U(w)| over the w grid
    double maximizer_improvement = 0.0;   // numeric box-search gain over the closed-form argmax
    int nt = 0;
    int nw = 0;
};

// Interior HJB residual of the closed-form candidate (y-independent, so the
// grid is over (t, w)). f' by central difference, all other derivatives
// exact. f_scale != 1 evaluates a deliberately perturbed candidate.
ResidualReport hjb_residual(const ClosedFormSolution& sol, const FirstOrderParams& model,
                            const HjbGrid& grid = {}, double f_scale = 1.0,
                            bool cross_check_maximizer = true, std::uint64_t seed = 1234);

using CandidateFn = std::function<double(double t, const Vector& y, double w)>;

struct BoundarySample {
    double t = 0.0;
    Vector y;  // y[k] == y[k+1]
    double w = 1.0;
    int k = 0;  // adjacent pair; normal is e_k - e_{k+1}
};

std::vector<BoundarySample> make_boundary_samples(int d, int count, double horizon,
                                                  std::uint64_t seed);

// Max |n . grad_y candidate| over the samples, central differences along the
// adjacent-pair normals. Exactly zero for y-independent candidates.
double neumann_check(const CandidateFn& candidate, const std::vector<BoundarySample>& samples,
                     double fd_step = 1e-5);

struct Perturbation {
    std::string name;
    double weight_scale = 1.0;
    Vector weight_shift;  // rank-space shift inside the constraint set (may be empty)
    double consumption_scale = 1.0;
};

// The ten standard perturbations: weight scale {0, 0.5, 1.5, 2}, consumption
// scale {0.5, 1.5}, four random in-constraint weight shifts.
std::vector<Perturbation> standard_perturbations(const ClosedFormSolution& sol, int d,
                                                 std::uint64_t seed);

struct GapEntry {
    std::string name;
    double gap = 0.0;      // J_optimal - J_perturbed, paired on common random numbers
    double stderr_ = 0.0;  // stderr of the paired differences
    std::int64_t n_inadmissible = 0;
    double z() const { return stderr_ > 0.0 ? gap / stderr_ : 0.0; }
};

std::vector<GapEntry> optimality_gap(const FirstOrderParams& model, const Preferences& prefs,
                                     const ClosedFormSolution& sol,
                                     const std::vector<Perturbation>& perturbations,
                                     const MarketState& state, const SimConfig& config);

struct SpreadReport {
    std::vector<ValueEstimate> estimates;
    double max_pairwise_z = 0.0;
};

// Runs mc_value under the optimal strategy from cyclic permutations of x0
// with independent seeds; the verification theorem predicts agreement.
SpreadReport rank_invariance_check(const FirstOrderParams& model, const Preferences& prefs,
                                   const ClosedFormSolution& sol, const Vector& x0,
                                   int n_variants, double w0, const SimConfig& config);

struct TerminalMoments {
    Vector mean, se_mean;  // E[Y_k(T)] per rank
    Vector m2, se_m2;      // E[Y_k(T)^2] per rank
    std::int64_t n_paths = 0;
};

// First and second moments of the terminal ranked vector, streaming.
TerminalMoments ranked_terminal_moments(const FirstOrderParams& model, const Vector& start,
                                        const SimConfig& config);

}  // namespace rankfolio
