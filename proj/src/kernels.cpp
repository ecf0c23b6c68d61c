#include "rankfolio/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace rankfolio::kernels {

namespace {

std::atomic<const detail::KernelTable*> g_table{nullptr};
std::atomic<Isa> g_isa{Isa::Scalar};

bool cpu_has_avx2() {
#if defined(RANKFOLIO_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void install([[maybe_unused]] Isa isa) {
#ifdef RANKFOLIO_HAVE_AVX2
    if (isa == Isa::Avx2) {
        g_table.store(&detail::avx2_table, std::memory_order_release);
        g_isa.store(Isa::Avx2, std::memory_order_release);
        return;
    }
#endif
    g_table.store(&detail::scalar_table, std::memory_order_release);
    g_isa.store(Isa::Scalar, std::memory_order_release);
}

const detail::KernelTable& table() {
    const detail::KernelTable* t = g_table.load(std::memory_order_acquire);
    if (t) return *t;
    Isa pick = cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
    if (const char* env = std::getenv("RANKFOLIO_ISA")) {
        if (std::strcmp(env, "scalar") == 0) pick = Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) pick = Isa::Avx2;
    }
    install(pick);
    return *g_table.load(std::memory_order_acquire);
}

}  // namespace

bool avx2_available() { return cpu_has_avx2(); }

Isa active_isa() {
    table();
    return g_isa.load(std::memory_order_acquire);
}

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && !cpu_has_avx2())
        throw std::runtime_error("force_isa: AVX2 kernels unavailable on this build/CPU");
    install(isa);
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void axpy(std::span<double> z, std::span<const double> x, double s) {
    table().axpy(z.data(), x.data(), z.size(), s);
}

void advance(std::span<double> z, std::span<const double> x, double a, double b) {
    table().advance(z.data(), x.data(), z.size(), a, b);
}

double sum(std::span<const double> x) { return table().sum(x.data(), x.size()); }

double dot(std::span<const double> a, std::span<const double> b) {
    return table().dot(a.data(), b.data(), a.size());
}

}  // namespace rankfolio::kernels
