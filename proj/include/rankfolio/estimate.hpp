#pragma once

#include <string>

#include "rankfolio/dynamics.hpp"

namespace rankfolio {

struct EstimationResult {
    Vector mu_hat;      // per-rank drift estimates, 1/year
    Vector mu_stderr;   // across-path standard errors
    Matrix a_hat;       // per-rank covariance estimates, 1/year
    Matrix a_stderr;
    std::int64_t n_paths = 0;
    double horizon = 0.0;
    std::string phi_source;  // "projection" | "local_time" | "none"
};

// Realized covariance of the ranked log paths: a_kl = (1/T) sum dlogY_k dlogY_l,
// averaged over paths. The reflection term is finite variation and drops out
// of the quadratic variation as h -> 0. n_steps_limit < n_steps evaluates on
// the grid prefix (nested horizons); -1 means the full grid.
struct RealizedCov {
    Matrix a_hat;
    Matrix a_stderr;
    std::int64_t n_paths = 0;
    double horizon = 0.0;
};
RealizedCov realized_cov(const PathBundle& bundle, int n_steps_limit = -1);

// Collision drift estimator: inverts the ranked log dynamics,
//   mu_hat_k = mean_p[ (logY_k(T) - logY_k(0) - int Y_k^{-1} dPhi_k) ] / T + a_hat_kk / 2,
// with the Phi integral discretized as sum dPhi_k / Y_k at the node the
// increment lands on. Needs the reflection record: either the projection
// displacements stored in a ranked bundle, or a local-time reconstruction.
EstimationResult collision_drift_estimator(const PathBundle& bundle, int n_steps_limit = -1);
EstimationResult collision_drift_estimator(const PathBundle& bundle,
                                           const ReflectionReconstruction& reconstruction);

}  // namespace rankfolio
