#include "smf/noise.hpp"

#include <cmath>
#include <numbers>

namespace smf {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng trajectory_stream(std::uint64_t master_seed, std::uint64_t index) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s = a ^ (index * 0xD1B54A32D192ED03ULL);
    std::uint64_t b = splitmix64(s);
    std::uint64_t c = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    return Rng(seq);
}

std::array<double, 4> draw_normals(Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    return {n01(rng), n01(rng), n01(rng), n01(rng)};
}

NoiseIncrement increment_from_normals(double dt, NoiseVariant variant, const std::array<double, 4>& g) {
    double sigma = std::sqrt(dt / 2.0);
    NoiseIncrement inc;
    if (variant == NoiseVariant::ComplexExact) {
        double s = sigma / std::numbers::sqrt2;
        inc.du_s = s * cplx(g[0], g[1]);
        inc.du_e = s * cplx(g[0], -g[1]);
        inc.dv_s = s * cplx(g[2], g[3]);
        inc.dv_e = s * cplx(g[2], -g[3]);
    } else {
        inc.du_s = inc.du_e = sigma * g[0];
        inc.dv_s = inc.dv_e = sigma * g[2];
    }
    return inc;
}

NoiseIncrement sample_increment(double dt, NoiseVariant variant, Rng& rng) {
    return increment_from_normals(dt, variant, draw_normals(rng));
}

XiLambda derived_xi_lambda(const NoiseIncrement& inc) {
    return {inc.du_s - I * inc.dv_s, inc.du_s + I * inc.dv_s, inc.dv_e - I * inc.du_e,
            inc.dv_e + I * inc.du_e};
}

}  // namespace smf
