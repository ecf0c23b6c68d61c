#include "rankfolio/estimate.hpp"

#include <cmath>
#include <stdexcept>

namespace rankfolio {

namespace {

int effective_steps(const PathBundle& b, int n_steps_limit) {
    if (n_steps_limit < 0) return b.n_steps;
    if (n_steps_limit < 2 || n_steps_limit > b.n_steps)
        throw std::invalid_argument("estimate: n_steps_limit out of range");
    return n_steps_limit;
}

void mean_stderr_accumulate(std::vector<double>& acc_sum, std::vector<double>& acc_sq,
                            const std::vector<double>& per_path, std::size_t stride) {
    for (std::size_t k = 0; k < stride; ++k) {
        acc_sum[k] += per_path[k];
        acc_sq[k] += per_path[k] * per_path[k];
    }
}

}  // namespace

RealizedCov realized_cov(const PathBundle& bundle, int n_steps_limit) {
    if (bundle.Y.empty()) throw std::invalid_argument("realized_cov: bundle has no ranked paths");
    if (bundle.n_steps < 2) throw std::invalid_argument("realized_cov: need >= 2 grid points");
    const int d = bundle.d;
    const int ns = effective_steps(bundle, n_steps_limit);
    const double horizon = bundle.times[ns] - bundle.times[0];

    const std::size_t nent = static_cast<std::size_t>(d) * d;
    std::vector<double> acc_sum(nent, 0.0), acc_sq(nent, 0.0), per_path(nent);
    std::int64_t n = 0;
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.ok[p]) continue;
        std::fill(per_path.begin(), per_path.end(), 0.0);
        for (int s = 0; s < ns; ++s) {
            const std::size_t b0 = bundle.node(p, s);
            const std::size_t b1 = bundle.node(p, s + 1);
            for (int k = 0; k < d; ++k) {
                const double dk = std::log(bundle.Y[b1 + k]) - std::log(bundle.Y[b0 + k]);
                for (int l = k; l < d; ++l) {
                    const double dl = std::log(bundle.Y[b1 + l]) - std::log(bundle.Y[b0 + l]);
                    per_path[static_cast<std::size_t>(k) * d + l] += dk * dl;
                }
            }
        }
        for (auto& v : per_path) v /= horizon;
        for (int k = 0; k < d; ++k)
            for (int l = 0; l < k; ++l)
                per_path[static_cast<std::size_t>(k) * d + l] =
                    per_path[static_cast<std::size_t>(l) * d + k];
        mean_stderr_accumulate(acc_sum, acc_sq, per_path, nent);
        ++n;
    }
    if (n == 0) throw std::runtime_error("realized_cov: no usable paths");

    RealizedCov out;
    out.n_paths = n;
    out.horizon = horizon;
    out.a_hat = Matrix(d, d);
    out.a_stderr = Matrix(d, d);
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
            const std::size_t e = static_cast<std::size_t>(k) * d + l;
            const double mean = acc_sum[e] / n;
            out.a_hat(k, l) = mean;
            if (n > 1) {
                const double var = std::max(0.0, (acc_sq[e] / n - mean * mean) * n / (n - 1.0));
                out.a_stderr(k, l) = std::sqrt(var / n);
            }
        }
    return out;
}

namespace {

EstimationResult drift_from_corrections(const PathBundle& bundle,
                                        const std::vector<double>& phi_over_y, int ns,
                                        const std::string& source) {
    const int d = bundle.d;
    const double horizon = bundle.times[ns] - bundle.times[0];
    const RealizedCov rc = realized_cov(bundle, ns == bundle.n_steps ? -1 : ns);

    std::vector<double> acc_sum(d, 0.0), acc_sq(d, 0.0), per_path(d);
    std::int64_t n = 0;
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.ok[p]) continue;
        const std::size_t b0 = bundle.node(p, 0);
        const std::size_t bT = bundle.node(p, ns);
        for (int k = 0; k < d; ++k) {
            const double dlog = std::log(bundle.Y[bT + k]) - std::log(bundle.Y[b0 + k]);
            per_path[k] = (dlog - phi_over_y[static_cast<std::size_t>(p) * d + k]) / horizon;
        }
        mean_stderr_accumulate(acc_sum, acc_sq, per_path, d);
        ++n;
    }
    if (n == 0) throw std::runtime_error("collision_drift_estimator: no usable paths");

    EstimationResult out;
    out.n_paths = n;
    out.horizon = horizon;
    out.phi_source = source;
    out.a_hat = rc.a_hat;
    out.a_stderr = rc.a_stderr;
    out.mu_hat.resize(d);
    out.mu_stderr.resize(d);
    for (int k = 0; k < d; ++k) {
        const double mean = acc_sum[k] / n;
        out.mu_hat[k] = mean + 0.5 * rc.a_hat(k, k);
        if (n > 1) {
            const double var = std::max(0.0, (acc_sq[k] / n - mean * mean) * n / (n - 1.0));
            out.mu_stderr[k] = std::sqrt(var / n);
        }
    }
    return out;
}

}  // namespace

EstimationResult collision_drift_estimator(const PathBundle& bundle, int n_steps_limit) {
    if (!bundle.has_Phi())
        throw std::invalid_argument(
            "collision_drift_estimator: bundle carries no reflection record; simulate with the "
            "ranked projected scheme or run reflection_from_local_times first");
    const int d = bundle.d;
    const int ns = effective_steps(bundle, n_steps_limit);
    std::vector<double> phi_over_y(static_cast<std::size_t>(bundle.n_paths) * d, 0.0);
    for (std::int64_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.ok[p]) continue;
        for (int s = 0; s < ns; ++s) {
            const std::size_t b0 = bundle.node(p, s);
            const std::size_t b1 = bundle.node(p, s + 1);
            for (int k = 0; k < d; ++k) {
                const double dphi = bundle.Phi[b1 + k] - bundle.Phi[b0 + k];
                if (dphi != 0.0)
                    phi_over_y[static_cast<std::size_t>(p) * d + k] +=
                        dphi / bundle.Y[b1 + k];
            }
        }
    }
    return drift_from_corrections(bundle, phi_over_y, ns, "projection");
}

EstimationResult collision_drift_estimator(const PathBundle& bundle,
                                           const ReflectionReconstruction& reconstruction) {
    if (reconstruction.n_paths != bundle.n_paths || reconstruction.d != bundle.d)
        throw std::invalid_argument(
            "collision_drift_estimator: reconstruction does not match the bundle");
    return drift_from_corrections(bundle, reconstruction.phi_over_y, bundle.n_steps,
                                  "local_time");
}

}  // namespace rankfolio
