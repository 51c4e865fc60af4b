// Ohmic-Drude spectral density and the bath memory kernels D, D1
//
// Natural units: hbar = 1.
//   J(w)   = eta * w * dc^2 / (dc^2 + w^2)
//   D(t)   = 2 int_0^inf J(w) sin(w t) dw           (dissipation kernel)
//   D1(t)  = 2 int_0^inf J(w) coth(w/2kT) cos(w t) dw (noise kernel)

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "smf/types.hpp"

namespace smf {

enum class SpectralKind { OhmicDrude };

struct SpectralDensityParams {
    SpectralKind kind{SpectralKind::OhmicDrude};
    double eta{0.0};      // coupling strength
    double delta_c{1.0};  // cutoff frequency
};

struct BathParams {
    SpectralDensityParams spectral;
    double kT{1.0};
    int matsubara_terms{0};       // explicit exponentials carried by the recursion; 0 = auto
    double omega_max{50.0};       // cutoff of the truncated frequency quadrature
    int quadrature_points{4000};
};

// Convenience constructor with omega_max = 50 dc
BathParams make_bath(double eta, double delta_c, double kT);

// Decaying exponential amplitude * exp(-rate * tau)
struct ExpTerm {
    cplx amplitude;
    cplx rate;
};

struct KernelTable {
    BathParams bath;
    double dtau{0.0};
    std::vector<double> d_values;   // D(k dtau)
    std::vector<double> d1_values;  // D1(k dtau); index 0 holds the truncated quadrature value
    std::vector<ExpTerm> d_terms;   // D  = sum of terms for tau > 0
    std::vector<ExpTerm> d1_terms;  // Drude pole + first matsubara_terms Matsubara poles

    std::size_t size() const { return d_values.size(); }
    double tau_max() const { return dtau * static_cast<double>(size() - 1); }
};

void validate(const SpectralDensityParams& p);
void validate(const BathParams& b);

double spectral_density(double omega, const SpectralDensityParams& p);

// Closed form pi*eta*dc^2*exp(-dc*tau) for tau > 0, 0 at tau = 0
double drude_d(const SpectralDensityParams& p, double tau);

// k-th Matsubara frequency 2 pi k kT
double matsubara_frequency(double kT, int k);

// Amplitude of the k-th Matsubara exponential of D1
double matsubara_amplitude(const BathParams& b, int k);

// Amplitude of the Drude-pole exponential of D1: pi eta dc^2 cot(dc/2kT)
double drude_pole_amplitude(const BathParams& b);

// sum_{k > from} c_k exp(-nu_k tau), summed to convergence; tau > 0
double matsubara_tail(const BathParams& b, int from, double tau);

// Full D1(tau) for tau > 0 from the converged exponential series
double d1_series(const BathParams& b, double tau);

// D1 by composite Gauss-Legendre quadrature truncated at omega_max
double d1_quadrature(const BathParams& b, double tau);

// Explicit Matsubara count for the recursion at integrator step dt
int auto_matsubara_terms(const BathParams& b, double dt);

// Short-lag remainder of D1 left over by K explicit terms: entry l-1 is
// matsubara_tail(b, K, l*dt) for l = 1..L, cut once negligible.
// Throws ConfigError when the window would exceed max_tail_window lags.
inline constexpr std::size_t max_tail_window = 4096;
std::vector<double> d1_tail_window(const BathParams& b, int K, double dt);

KernelTable build_kernel_table(const BathParams& b, double tau_max, double dtau);

// Linear interpolation on the table; returns (D, D1)
std::pair<double, double> kernel_eval(const KernelTable& table, double tau);

}  // namespace smf
