#include "rankfolio/kernels.hpp"

#include <cmath>

// Reference kernels. The 4-lane accumulator layout in sum/dot mirrors the
// AVX2 register lanes so both ISAs produce the same bits.
namespace rankfolio::kernels::detail {

namespace {

void axpy_scalar(double* z, const double* x, std::size_t n, double s) {
    for (std::size_t i = 0; i < n; ++i) z[i] = std::fma(s, x[i], z[i]);
}

void advance_scalar(double* z, const double* x, std::size_t n, double a, double b) {
    for (std::size_t i = 0; i < n; ++i) z[i] = std::fma(a, x[i], z[i] + b);
}

double sum_scalar(const double* x, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        a0 += x[i];
        a1 += x[i + 1];
        a2 += x[i + 2];
        a3 += x[i + 3];
    }
    double s = (a0 + a2) + (a1 + a3);
    for (std::size_t i = n4; i < n; ++i) s += x[i];
    return s;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        a0 = std::fma(a[i], b[i], a0);
        a1 = std::fma(a[i + 1], b[i + 1], a1);
        a2 = std::fma(a[i + 2], b[i + 2], a2);
        a3 = std::fma(a[i + 3], b[i + 3], a3);
    }
    double s = (a0 + a2) + (a1 + a3);
    for (std::size_t i = n4; i < n; ++i) s = std::fma(a[i], b[i], s);
    return s;
}

}  // namespace

const KernelTable scalar_table = {axpy_scalar, advance_scalar, sum_scalar,
                                  dot_scalar};

}  // namespace rankfolio::kernels::detail
