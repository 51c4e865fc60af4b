// Single-trajectory propagation of the reduced spin density with a
// stochastic, time-non-local mean field <B(t)>.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "smf/kernels.hpp"
#include "smf/noise.hpp"
#include "smf/types.hpp"

namespace smf {

struct SpinBosonParams {
    double omega0{1.0};   // sigma_x term of h_S
    double epsilon{0.0};  // sigma_z term of h_S
    std::array<double, 3> initial_bloch{0.0, 0.0, 1.0};
};

void validate(const SpinBosonParams& p);
Mat2 system_hamiltonian(const SpinBosonParams& p);

enum class ConvolutionMode { Direct, ExponentialRecursion };
enum class DeterministicOrder { Euler, Heun };

struct IntegratorConfig {
    double dt{1e-3};
    double t_max{1.0};
    ConvolutionMode convolution{ConvolutionMode::ExponentialRecursion};
    NoiseVariant variant{NoiseVariant::ComplexExact};
    DeterministicOrder order{DeterministicOrder::Heun};
    int noise_substeps{1};       // increments per step, summed (shares a path with a run at dt/m)
    bool suppress_noise{false};  // deterministic run: all increments zero
    double divergence_bound{1e100};

    std::size_t steps() const;
};

void validate(const IntegratorConfig& c);

// Shared, immutable data for evaluating <B(t_n)> at integrator step dt
struct ConvolutionPlan {
    double dt{0.0};
    std::size_t n_steps{0};
    ConvolutionMode mode{ConvolutionMode::ExponentialRecursion};
    // recursion
    std::vector<cplx> d_amp, d_decay;    // D terms
    std::vector<cplx> d1_amp, d1_decay;  // D1 explicit terms
    std::vector<double> d1_tail;         // remainder at lags 1..L
    // direct
    std::vector<double> d_lag, d1_lag;   // kernel at lags 0..n_steps
};

ConvolutionPlan make_plan(const KernelTable& table, double dt, std::size_t n_steps, ConvolutionMode mode);

// Running source <B(t_n)> = -sum_k D(t_n-t_k)(q_k dt + du_E,k) + sum_k D1(t_n-t_k) dv_E,k, k < n
class MeanFieldSource {
public:
    explicit MeanFieldSource(const ConvolutionPlan& plan);

    cplx value() const;
    // record step n data and advance to n+1
    void push(cplx q, cplx du_e, cplx dv_e);
    std::size_t step() const { return step_; }

    const std::vector<cplx>& q_history() const { return q_hist_; }
    const std::vector<cplx>& du_e_history() const { return du_hist_; }
    const std::vector<cplx>& dv_e_history() const { return dv_hist_; }

private:
    const ConvolutionPlan* plan_;
    std::size_t step_{0};
    std::vector<cplx> s_d_, s_d1_;  // exponential accumulators
    std::vector<cplx> ring_;        // last L dv_E values
    std::size_t ring_pos_{0};
    std::vector<cplx> q_hist_, du_hist_, dv_hist_;  // direct mode only
};

struct TrajectoryState {
    Mat2 rho;
    std::size_t step_index{0};
    MeanFieldSource source;
    double max_trace_error{0.0};
};

TrajectoryState initial_state(const SpinBosonParams& p, const ConvolutionPlan& plan);

// Deterministic part of one step: dt * f(rho) (Euler) or its Heun average, with H = h_S + B Q
Mat2 drift_increment(const Mat2& rho, const Mat2& h, cplx b, double dt, DeterministicOrder order);

// rho + drift + du_S {Q~, rho} - i dv_S [Q~, rho], Q~ = sigma_x - Tr(sigma_x rho)
Mat2 smf_update(const Mat2& rho, const Mat2& h, cplx b, const NoiseIncrement& inc, double dt,
                DeterministicOrder order);

// Full step: evaluates <B>, updates rho, appends histories
void smf_step(TrajectoryState& state, const Mat2& h, const NoiseIncrement& inc, const IntegratorConfig& cfg);

using Bloch = std::array<cplx, 3>;
Bloch observables(const Mat2& rho);

struct TrajectoryResult {
    std::vector<Bloch> samples;  // one per output time
    bool divergent{false};
    std::size_t divergent_step{0};
    std::string reason;
    double max_trace_error{0.0};
};

// Draws the step increment (summing noise_substeps sub-increments) from rng
NoiseIncrement step_increment(const IntegratorConfig& cfg, Rng& rng);

TrajectoryResult run_trajectory(const SpinBosonParams& p, const ConvolutionPlan& plan,
                                const IntegratorConfig& cfg, std::size_t output_stride, Rng& rng);

// Pure-state pair |phi1>, <phi2| propagated with d|phi1> = (-i dt H + dxi_S Q~)|phi1>,
// d<phi2| = <phi2|(i dt H + dlambda_S Q~)
TrajectoryResult run_trajectory_sse(const SpinBosonParams& p, const ConvolutionPlan& plan,
                                    const IntegratorConfig& cfg, std::size_t output_stride, Rng& rng);

}  // namespace smf
