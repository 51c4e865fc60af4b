// Independent validators: TCL2, pure-dephasing closed form,
// tiny-bath exact and stochastic propagators, one-step exactness, lambda_stat
// and single-mode moment checks.

#pragma once

#include <cstdint>
#include <vector>

#include "smf/engine.hpp"
#include "smf/ensemble.hpp"
#include "smf/kernels.hpp"
#include "smf/noise.hpp"

namespace smf {

// ---- TCL2 -----------------------------------------------------------------

// Needs a table with dtau = dt/2 (RK4 midpoints) covering t_max.
EnsembleResult tcl2_run(const SpinBosonParams& p, const KernelTable& table, double dt, double t_max,
                        std::size_t output_stride);
EnsembleResult tcl2_run(const SpinBosonParams& p, const BathParams& bath, double dt, double t_max,
                        std::size_t output_stride);

// ---- pure dephasing ---------------------------------------------------------

// epsilon = 0, initial <sz> = 1: <sz(t)> = cos(2 w0 t) exp(-G(t)),
// G(t) = 2 int_0^t (t-u) D1(u) du
double dephasing_exponent(const BathParams& b, double t);
double pure_dephasing_sz(const BathParams& b, double omega0, double t);

// ---- tiny bath --------------------------------------------------------------

struct BathMode {
    double omega{1.0};
    double kappa{0.0};
    int fock_dim{8};
};

struct TinyBathSpec {
    std::vector<BathMode> modes;
    double kT{0.5};                // 0 selects the ground state
    std::vector<MatX> initial;     // optional per-mode initial states (overrides kT)
};

void validate(const TinyBathSpec& s);

// Mode operators in the Fock basis (m = 1): B_n = -kappa (a + a^dag)/sqrt(2 omega)
MatX annihilation(int dim);
MatX mode_coupling(const BathMode& m);
VecX mode_energies(const BathMode& m);  // omega (n + 1/2)
MatX thermal_state(const BathMode& m, double kT);
MatX coherent_state(int dim, cplx alpha);
std::vector<MatX> initial_bath_states(const TinyBathSpec& s);

struct ExactReport {
    EnsembleResult series;
    double max_trace_dev{0.0};
    double max_purity_dev{0.0};
    double max_top_population{0.0};
};

// Exact unitary propagation of the full density on system x bath
ExactReport tiny_bath_exact(const TinyBathSpec& s, const SpinBosonParams& p, double dt, double t_max,
                            std::size_t output_stride);

enum class Scheme { SMF, Plain };

struct TinyRunConfig {
    double dt{0.01};
    double t_max{1.0};
    std::size_t n_traj{1000};
    std::size_t output_stride{1};
    std::uint64_t seed{1};
    unsigned workers{0};
    Scheme scheme{Scheme::SMF};
    double divergence_threshold{0.01};
    double divergence_bound{1e100};
};

// Stochastic propagation of rho_S and per-mode rho_n with split free evolution.
// If lambda_stat is given it receives mean Tr(D^dag D) - Tr(M^dag M) at each output time,
// over the trajectories that stayed finite.
EnsembleResult tiny_bath_smf(const TinyBathSpec& s, const SpinBosonParams& p, const TinyRunConfig& cfg,
                             std::vector<double>* lambda_stat = nullptr);

// Per-trajectory stochastic state for the tiny bath
struct TinyState {
    Mat2 rho_s;
    std::vector<MatX> rho_n;
};

// One Euler step without splitting (used by the one-step and lambda_stat checks)
void tiny_euler_step(TinyState& st, const TinyBathSpec& s, const SpinBosonParams& p, const NoiseIncrement& inc,
                     double dt, Scheme scheme);

// Kronecker product rho_S x rho_1 x rho_2 ...
MatX total_density(const TinyState& st);

// Full Hamiltonian on system x bath
MatX total_hamiltonian(const TinyBathSpec& s, const SpinBosonParams& p);

struct OneStepReport {
    MatX mean_increment;   // sample mean of dD
    MatX exact_increment;  // -i dt [H, D]
    Eigen::MatrixXd stderr_elem;  // max(sd Re, sd Im)/sqrt(n) per element
    double max_ratio{0.0};        // max |mean - exact| / (4 stderr)
    bool pass{false};
};

OneStepReport one_step_mean_check(const TinyBathSpec& s, const SpinBosonParams& p, double dt,
                                  std::size_t n_samples, Scheme scheme, std::uint64_t seed, unsigned workers = 0);

struct LambdaStatReport {
    double empirical{0.0};   // lambda_stat(dt) - lambda_stat(0)
    double stderr{0.0};
    double predicted_smf{0.0};
    double predicted_plain{0.0};
    double z{0.0};           // (empirical - predicted for the scheme) / stderr
};

// lambda_stat = mean Tr(D^dag D) - Tr(M^dag M), M = mean D
LambdaStatReport lambda_stat_growth_check(const TinyBathSpec& s, const SpinBosonParams& p, double dt,
                                          std::size_t n_samples, Scheme scheme, std::uint64_t seed,
                                          unsigned workers = 0);

// Standard check setups shared by the CLI and the test suites
TinyBathSpec default_tiny_bath();        // two modes (2, 3), kappa 0.3, fock 8, kT 0.5
SpinBosonParams default_tiny_system();   // omega0 1, epsilon 0.5, <sz> = 1
TinyBathSpec one_step_bath();            // one mode, fock 4, weak coherent state
TinyBathSpec lambda_stat_bath();         // one mode, fock 6, ground state
SpinBosonParams check_system();          // pure state off the Q eigenbasis
inline constexpr double check_dt = 1e-3;

// ---- single-mode Gaussian moments ---------------------------------------------

// Occupation from coth(omega/2kT) = 2 N + 1
double thermal_occupation(double omega, double kT);

struct ModeMoments {
    cplx a;        // <a>
    cplx ad;       // <a^dag>
    cplx s_mm;     // <aa> - <a>^2
    cplx s_pp;     // <a^dag a^dag> - <a^dag>^2
    cplx s_pm;     // <a^dag a> - <a^dag><a>
};

// Ito increments of the moments for one step of the environment equation
// d rho = -i dt [h + q B, rho] + dxi (B - <B>) rho + dlambda rho (B - <B>),
// with third moments closed by Wick's theorem and the quadratic-variation terms
// taken from the variant's noise contract.
ModeMoments moment_increment(const ModeMoments& m, double omega, double c, cplx q, cplx dxi, cplx dlambda,
                             double dt, NoiseVariant variant);

// Noise loadings (coefficients of dxi, dlambda) of d<X> for X in {a, a^dag, aa, a^dag a^dag, a^dag a}
struct MomentLoadings {
    std::array<cplx, 5> xi;
    std::array<cplx, 5> lambda;
    std::array<cplx, 5> drift;  // coefficient of dt
};
MomentLoadings raw_moment_loadings(const ModeMoments& m, double omega, double c, cplx q);

struct MomentCheckReport {
    double nbar{0.0};
    double max_s_mm{0.0};
    double max_s_pp{0.0};
    double max_s_mp_dev{0.0};  // |sigma_-+ - (N + 1)|
    bool pass{false};
};

MomentCheckReport single_mode_moment_check(double omega, double kappa, double kT, double dt, std::size_t steps,
                                           std::uint64_t seed, NoiseVariant variant = NoiseVariant::ComplexExact);

}  // namespace smf
