#pragma once

#include <cstddef>
#include <span>

// Runtime-dispatched arithmetic kernels for the Monte Carlo inner loops.
// The scalar reference and the AVX2 variants are bit-identical: every
// element goes through the same correctly-rounded fma, and reductions use
// the same fixed 4-lane accumulator structure in both implementations.
// Dispatch therefore never changes numerical results, only throughput.
namespace rankfolio::kernels {

enum class Isa { Scalar, Avx2 };

bool avx2_available();
Isa active_isa();
// Test/CLI hook; throws std::runtime_error if the requested ISA is not
// compiled in or not supported by the CPU. Honors RANKFOLIO_ISA=scalar|avx2
// on first use.
void force_isa(Isa isa);
const char* isa_name(Isa isa);

// z[i] = fma(s, x[i], z[i])
void axpy(std::span<double> z, std::span<const double> x, double s);

// z[i] = fma(a, x[i], z[i] + b)   -- log-Euler advance: state += drift*dt + scale*noise
void advance(std::span<double> z, std::span<const double> x, double a, double b);

// Fixed-order 4-lane sum; deterministic and identical across ISAs.
double sum(std::span<const double> x);

// Fixed-order 4-lane fma dot product.
double dot(std::span<const double> a, std::span<const double> b);

namespace detail {
struct KernelTable {
    void (*axpy)(double*, const double*, std::size_t, double);
    void (*advance)(double*, const double*, std::size_t, double, double);
    double (*sum)(const double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
};
extern const KernelTable scalar_table;
#ifdef RANKFOLIO_HAVE_AVX2
extern const KernelTable avx2_table;
#endif
}  // namespace detail

}  // namespace rankfolio::kernels
