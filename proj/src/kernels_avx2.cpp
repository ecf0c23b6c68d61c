#include "rankfolio/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace rankfolio::kernels::detail {

namespace {

void axpy_avx2(double* z, const double* x, std::size_t n, double s) {
    const __m256d vs = _mm256_set1_pd(s);
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d vz = _mm256_loadu_pd(z + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(z + i, _mm256_fmadd_pd(vs, vx, vz));
    }
    for (std::size_t i = n4; i < n; ++i) z[i] = std::fma(s, x[i], z[i]);
}

void advance_avx2(double* z, const double* x, std::size_t n, double a, double b) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d vz = _mm256_loadu_pd(z + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(z + i, _mm256_fmadd_pd(va, vx, _mm256_add_pd(vz, vb)));
    }
    for (std::size_t i = n4; i < n; ++i) z[i] = std::fma(a, x[i], z[i] + b);
}

// Lane j of the register accumulates x[i+j], matching the scalar layout.
inline double hsum_lanes(__m256d acc) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    return (lane[0] + lane[2]) + (lane[1] + lane[3]);
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum_lanes(acc);
    for (std::size_t i = n4; i < n; ++i) s += x[i];
    return s;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum_lanes(acc);
    for (std::size_t i = n4; i < n; ++i) s = std::fma(a[i], b[i], s);
    return s;
}

}  // namespace

const KernelTable avx2_table = {axpy_avx2, advance_avx2, sum_avx2, dot_avx2};

}  // namespace rankfolio::kernels::detail
