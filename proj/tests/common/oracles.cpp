#include "oracles.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

namespace oracle {

namespace {
constexpr double pi = std::numbers::pi;
}

double d_fourier(double eta, double dc, double tau) {
    if (tau == 0.0) return 0.0;
    static boost::math::quadrature::ooura_fourier_sin<double> sin_rule(1e-13, 12);
    auto j = [=](double w) { return eta * w * dc * dc / (dc * dc + w * w); };
    return 2.0 * sin_rule.integrate(j, tau).first;
}

double d1_fourier(double eta, double dc, double kT, double tau) {
    static boost::math::quadrature::ooura_fourier_cos<double> cos_rule(1e-13, 12);
    auto f = [=](double w) {
        double x = w / (2.0 * kT);
        // w coth(w/2kT) written to stay finite as w -> 0
        double wcoth = x < 1e-6 ? 2.0 * kT * (1.0 + x * x / 3.0) : w / std::tanh(x);
        return eta * dc * dc / (dc * dc + w * w) * wcoth;
    };
    return 2.0 * cos_rule.integrate(f, tau).first;
}

double dephasing_exponent_series(double eta, double dc, double kT, double t) {
    // D1(u) = sum_j c_j exp(-r_j u); int_0^t (t-u) e^{-r u} du = t/r - (1 - e^{-r t})/r^2
    auto piece = [t](double r) { return t / r - (-std::expm1(-r * t)) / (r * r); };
    double g = pi * eta * dc * dc / std::tan(dc / (2.0 * kT)) * piece(dc);
    for (long k = 1;; ++k) {
        double nu = 2.0 * pi * static_cast<double>(k) * kT;
        double c = 4.0 * pi * eta * dc * dc * kT * nu / (nu * nu - dc * dc);
        double term = c * piece(nu);
        g += term;
        // terms fall off as 1/k^2 once nu t >> 1; close with the integral tail
        if (nu * t > 50.0 && std::abs(term) < 1e-13 * std::abs(g)) {
            g += term * static_cast<double>(k);
            break;
        }
    }
    return 2.0 * g;
}

double bose(double omega, double kT) { return 1.0 / std::expm1(omega / kT); }

}  // namespace oracle
