// Correlated Gaussian increments (du_S, dv_S, du_E, dv_E)

#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "smf/types.hpp"

namespace smf {

enum class NoiseVariant { ComplexExact, RealApproximate };

struct NoiseIncrement {
    cplx du_s{};
    cplx dv_s{};
    cplx du_e{};
    cplx dv_e{};

    NoiseIncrement& operator+=(const NoiseIncrement& o) {
        du_s += o.du_s;
        dv_s += o.dv_s;
        du_e += o.du_e;
        dv_e += o.dv_e;
        return *this;
    }
};

struct XiLambda {
    cplx dxi_s, dlambda_s, dxi_e, dlambda_e;
};

using Rng = std::mt19937_64;

// One splitmix64 output; advances state
std::uint64_t splitmix64(std::uint64_t& state);

// Independent stream for trajectory `index` of a run seeded with `master_seed`
Rng trajectory_stream(std::uint64_t master_seed, std::uint64_t index);

// Four standard normals per step for both variants so that runs with equal
// seeds share their Brownian path across variants.
std::array<double, 4> draw_normals(Rng& rng);

NoiseIncrement increment_from_normals(double dt, NoiseVariant variant, const std::array<double, 4>& g);

NoiseIncrement sample_increment(double dt, NoiseVariant variant, Rng& rng);

XiLambda derived_xi_lambda(const NoiseIncrement& inc);

}  // namespace smf
