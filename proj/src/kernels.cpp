#include "smf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

namespace smf {

namespace {

constexpr double pi = std::numbers::pi;

// x*coth(x), finite at 0
double x_coth_x(double x) {
    if (std::abs(x) < 1e-4) return 1.0 + x * x / 3.0;
    return x / std::tanh(x);
}

}  // namespace

BathParams make_bath(double eta, double delta_c, double kT) {
    BathParams b;
    b.spectral.eta = eta;
    b.spectral.delta_c = delta_c;
    b.kT = kT;
    b.omega_max = 50.0 * delta_c;
    return b;
}

void validate(const SpectralDensityParams& p) {
    if (!(p.eta >= 0.0)) throw ConfigError("bath.eta must be >= 0");
    if (!(p.delta_c > 0.0)) throw ConfigError("bath.delta_c must be > 0");
}

void validate(const BathParams& b) {
    validate(b.spectral);
    if (!(b.kT > 0.0)) throw ConfigError("bath.kT must be > 0");
    if (b.matsubara_terms < 0) throw ConfigError("bath.matsubara_terms must be >= 1 or auto");
    if (!(b.omega_max >= 10.0 * b.spectral.delta_c))
        throw ConfigError("bath.omega_max must be >= 10*delta_c");
    if (b.quadrature_points < 20) throw ConfigError("bath.quadrature_points must be >= 20");
    // cot(dc/2kT) pole: a Matsubara frequency sitting on the cutoff
    double ratio = b.spectral.delta_c / (2.0 * pi * b.kT);
    double nearest = std::round(ratio);
    if (nearest >= 1.0 && std::abs(ratio - nearest) < 1e-9)
        throw ConfigError("bath: delta_c coincides with a Matsubara frequency; shift kT or delta_c");
}

double spectral_density(double omega, const SpectralDensityParams& p) {
    if (omega < 0.0) throw DomainError("spectral_density: omega must be >= 0");
    double dc2 = p.delta_c * p.delta_c;
    return p.eta * omega * dc2 / (dc2 + omega * omega);
}

double drude_d(const SpectralDensityParams& p, double tau) {
    if (tau == 0.0) return 0.0;
    double v = pi * p.eta * p.delta_c * p.delta_c * std::exp(-p.delta_c * std::abs(tau));
    return tau > 0.0 ? v : -v;
}

double matsubara_frequency(double kT, int k) { return 2.0 * pi * k * kT; }

double matsubara_amplitude(const BathParams& b, int k) {
    double nu = matsubara_frequency(b.kT, k);
    double dc = b.spectral.delta_c;
    return 4.0 * pi * b.spectral.eta * dc * dc * b.kT * nu / (nu * nu - dc * dc);
}

double drude_pole_amplitude(const BathParams& b) {
    double dc = b.spectral.delta_c;
    return pi * b.spectral.eta * dc * dc / std::tan(dc / (2.0 * b.kT));
}

double matsubara_tail(const BathParams& b, int from, double tau) {
    if (!(tau > 0.0)) throw DomainError("matsubara_tail: tau must be > 0");
    double r = std::exp(-2.0 * pi * b.kT * tau);
    double geo = r / (1.0 - r);
    double sum = 0.0;
    for (int k = from + 1;; ++k) {
        double term = matsubara_amplitude(b, k) * std::exp(-matsubara_frequency(b.kT, k) * tau);
        sum += term;
        // remaining terms are bounded by a geometric series once c_k is decreasing
        double nu = matsubara_frequency(b.kT, k);
        if (nu > 2.0 * b.spectral.delta_c && std::abs(term) * geo <= 1e-17 * std::abs(sum)) break;
        if (term == 0.0 && nu > 2.0 * b.spectral.delta_c) break;
    }
    return sum;
}

double d1_series(const BathParams& b, double tau) {
    if (!(tau > 0.0)) throw DomainError("d1_series: tau must be > 0");
    double dc = b.spectral.delta_c;
    return drude_pole_amplitude(b) * std::exp(-dc * tau) + matsubara_tail(b, 0, tau);
}

double d1_quadrature(const BathParams& b, double tau) {
    const auto& s = b.spectral;
    double dc2 = s.delta_c * s.delta_c;
    auto f = [&](double w) {
        double jcoth = s.eta * dc2 / (dc2 + w * w) * 2.0 * b.kT * x_coth_x(w / (2.0 * b.kT));
        return 2.0 * jcoth * std::cos(w * tau);
    };
    int panels = std::max(1, b.quadrature_points / 20);
    double h = b.omega_max / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p)
        sum += boost::math::quadrature::gauss<double, 20>::integrate(f, p * h, (p + 1) * h);
    return sum;
}

int auto_matsubara_terms(const BathParams& b, double dt) {
    double nu1 = matsubara_frequency(b.kT, 1);
    int k = static_cast<int>(std::ceil(std::sqrt(32.0 / (nu1 * dt))));
    return std::clamp(k, 1, 2000);
}

std::vector<double> d1_tail_window(const BathParams& b, int K, double dt) {
    double scale = std::max(std::abs(d1_series(b, dt)), std::abs(drude_pole_amplitude(b)));
    std::vector<double> w;
    for (std::size_t l = 1;; ++l) {
        double v = matsubara_tail(b, K, static_cast<double>(l) * dt);
        if (std::abs(v) <= 1e-14 * scale) break;  // also ends at once for eta = 0
        if (l > max_tail_window) {
            std::ostringstream os;
            os << "Matsubara remainder after " << K << " terms is not negligible within "
               << max_tail_window << " lags of dt=" << dt << "; increase bath.matsubara_terms";
            throw ConfigError(os.str());
        }
        w.push_back(v);
    }
    return w;
}

KernelTable build_kernel_table(const BathParams& b, double tau_max, double dtau) {
    validate(b);
    if (!(tau_max > 0.0) || !(dtau > 0.0)) throw ConfigError("kernel table: tau_max and dtau must be > 0");
    double nf = tau_max / dtau;
    auto n = static_cast<std::size_t>(std::llround(nf));
    if (n == 0 || std::abs(nf - static_cast<double>(n)) > 1e-6)
        throw ConfigError("kernel table: tau_max must be an integer multiple of dtau");

    KernelTable t;
    t.bath = b;
    t.dtau = dtau;
    t.d_values.resize(n + 1);
    t.d1_values.resize(n + 1);
    t.d_values[0] = 0.0;
    t.d1_values[0] = d1_quadrature(b, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        double tau = static_cast<double>(k) * dtau;
        t.d_values[k] = drude_d(b.spectral, tau);
        t.d1_values[k] = d1_series(b, tau);
    }

    const auto& s = b.spectral;
    t.d_terms.push_back({pi * s.eta * s.delta_c * s.delta_c, s.delta_c});
    int K = b.matsubara_terms > 0 ? b.matsubara_terms : auto_matsubara_terms(b, dtau);
    t.d1_terms.push_back({drude_pole_amplitude(b), s.delta_c});
    for (int k = 1; k <= K; ++k)
        t.d1_terms.push_back({matsubara_amplitude(b, k), matsubara_frequency(b.kT, k)});
    // the remainder beyond K must be representable as a short lag window
    (void)d1_tail_window(b, K, dtau);
    return t;
}

std::pair<double, double> kernel_eval(const KernelTable& table, double tau) {
    double tmax = table.tau_max();
    if (!(tau >= 0.0) || tau > tmax * (1.0 + 1e-12))
        throw DomainError("kernel_eval: tau outside [0, tau_max]");
    double x = tau / table.dtau;
    auto i = static_cast<std::size_t>(std::floor(x));
    double frac = x - static_cast<double>(i);
    if (i >= table.size() - 1) return {table.d_values.back(), table.d1_values.back()};
    if (frac < 1e-12) return {table.d_values[i], table.d1_values[i]};
    double d = (1.0 - frac) * table.d_values[i] + frac * table.d_values[i + 1];
    double d1 = (1.0 - frac) * table.d1_values[i] + frac * table.d1_values[i + 1];
    return {d, d1};
}

}  // namespace smf
