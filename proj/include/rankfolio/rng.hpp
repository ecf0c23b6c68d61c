#pragma once

#include <cmath>
#include <cstdint>

namespace rankfolio {

// splitmix64, used only to expand seeds.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256++ (Blackman & Vigna). Small, fast, and reproducible across
// platforms, unlike std::normal_distribution.
class Xoshiro256pp {
public:
    Xoshiro256pp() : s_{1, 2, 3, 4} {}

    static Xoshiro256pp seeded(std::uint64_t seed) {
        SplitMix64 sm{seed};
        Xoshiro256pp g;
        for (auto& w : g.s_) w = sm.next();
        if ((g.s_[0] | g.s_[1] | g.s_[2] | g.s_[3]) == 0) g.s_[0] = 0x9E3779B97F4A7C15ULL;
        return g;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// One independent stream per path, derived from (master_seed, stream id).
// Stream layout is a pure function of its arguments, so results never
// depend on how paths are distributed over workers.
inline Xoshiro256pp path_rng(std::uint64_t master_seed, std::uint64_t stream) {
    return Xoshiro256pp::seeded(master_seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
}

// Uniform on the open interval (0,1): 53-bit mantissa, offset half an ulp.
inline double uniform_open01(Xoshiro256pp& g) {
    return (static_cast<double>(g.next() >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse normal CDF, Acklam's rational approximation (|rel err| < 1.2e-9).
// Chosen over Box-Muller to keep the draw count per normal fixed at one
// uniform and to avoid trig.
inline double inverse_normal_cdf(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    constexpr double p_high = 1.0 - p_low;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > p_high) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

inline double standard_normal(Xoshiro256pp& g) { return inverse_normal_cdf(uniform_open01(g)); }

}  // namespace rankfolio
