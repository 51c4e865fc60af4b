#include "smf/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace smf {

namespace {

Mat2 comm(const Mat2& a, const Mat2& b) { return a * b - b * a; }
Mat2 anti(const Mat2& a, const Mat2& b) { return a * b + b * a; }

// exp(-i h tau) for h = w0 sx + eps sz
Mat2 free_propagator(const SpinBosonParams& p, double tau) {
    double omega = std::hypot(p.omega0, p.epsilon);
    if (omega == 0.0) return Mat2::Identity();
    double th = omega * tau;
    return std::cos(th) * Mat2::Identity() - I * std::sin(th) / omega * system_hamiltonian(p);
}

MatX kron(const MatX& a, const MatX& b) {
    MatX out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

EnsembleResult empty_series(std::size_t n_out) {
    EnsembleResult r;
    r.times.resize(n_out);
    for (int o = 0; o < 3; ++o) {
        r.mean[o].resize(n_out);
        r.err[o].assign(n_out, 0.0);
    }
    return r;
}

void put(EnsembleResult& r, std::size_t k, double t, const Bloch& b) {
    r.times[k] = t;
    for (int o = 0; o < 3; ++o) r.mean[o][k] = b[o];
}

bool finite_bounded(const MatX& m, double bound) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const cplx& v = m.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) || std::abs(v) > bound) return false;
    }
    return true;
}

}  // namespace

// ---- TCL2 -------------------------------------------------------------------

EnsembleResult tcl2_run(const SpinBosonParams& p, const KernelTable& table, double dt, double t_max,
                        std::size_t output_stride) {
    validate(p);
    if (!(dt > 0.0) || !(t_max > 0.0)) throw ConfigError("tcl2: dt and t_max must be > 0");
    if (output_stride == 0) throw ConfigError("tcl2: output_stride must be >= 1");
    auto n_steps = static_cast<std::size_t>(std::llround(t_max / dt));
    if (std::abs(table.dtau * 2.0 - dt) > 1e-12 * dt) throw ConfigError("tcl2: table spacing must be dt/2");
    if (table.size() < 2 * n_steps + 1) throw ConfigError("tcl2: kernel table does not cover t_max");
    if (n_steps % output_stride != 0) throw ConfigError("tcl2: output_stride must divide t_max/dt");

    // cumulative Lambda(t), Gamma(t) on the half-step grid by the trapezoid rule
    const double h = table.dtau;
    const Mat2 sx = pauli::sx();
    std::size_t n_half = 2 * n_steps + 1;
    std::vector<Mat2> lam(n_half), gam(n_half);
    lam[0].setZero();
    gam[0].setZero();
    Mat2 prev_q = sx;
    for (std::size_t j = 1; j < n_half; ++j) {
        Mat2 u = free_propagator(p, static_cast<double>(j) * h);
        Mat2 qj = u * sx * u.adjoint();  // Q(-tau)
        lam[j] = lam[j - 1] + 0.25 * h * (table.d1_values[j - 1] * prev_q + table.d1_values[j] * qj);
        gam[j] = gam[j - 1] + 0.25 * h * (table.d_values[j - 1] * prev_q + table.d_values[j] * qj);
        prev_q = qj;
    }

    const Mat2 hs = system_hamiltonian(p);
    auto rhs = [&](const Mat2& rho, std::size_t j) {
        return Mat2(-I * comm(hs, rho) - comm(sx, comm(lam[j], rho)) + I * comm(sx, anti(gam[j], rho)));
    };

    const auto& nb = p.initial_bloch;
    Mat2 rho = density_from_bloch(nb[0], nb[1], nb[2]);
    EnsembleResult r = empty_series(n_steps / output_stride + 1);
    put(r, 0, 0.0, observables(rho));
    for (std::size_t n = 0; n < n_steps; ++n) {
        std::size_t j = 2 * n;
        Mat2 k1 = rhs(rho, j);
        Mat2 k2 = rhs(rho + 0.5 * dt * k1, j + 1);
        Mat2 k3 = rhs(rho + 0.5 * dt * k2, j + 1);
        Mat2 k4 = rhs(rho + dt * k3, j + 2);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if ((n + 1) % output_stride == 0)
            put(r, (n + 1) / output_stride, static_cast<double>(n + 1) * dt, observables(rho));
    }
    return r;
}

EnsembleResult tcl2_run(const SpinBosonParams& p, const BathParams& bath, double dt, double t_max,
                        std::size_t output_stride) {
    auto n_steps = static_cast<double>(std::llround(t_max / dt));
    KernelTable table = build_kernel_table(bath, n_steps * dt, dt / 2.0);
    return tcl2_run(p, table, dt, t_max, output_stride);
}

// ---- pure dephasing ---------------------------------------------------------

double dephasing_exponent(const BathParams& b, double t) {
    if (t == 0.0) return 0.0;
    const auto& s = b.spectral;
    double dc2 = s.delta_c * s.delta_c;
    // 4 int J coth (1 - cos wt) / w^2 dw
    auto f = [&](double w) {
        if (w < 1e-8) return 4.0 * s.eta * 2.0 * b.kT * 0.5 * t * t;
        double x = w / (2.0 * b.kT);
        double wcoth = x < 1e-4 ? 2.0 * b.kT * (1.0 + x * x / 3.0) : w / std::tanh(x);
        double half = std::sin(0.5 * w * t);
        double one_minus_cos = 2.0 * half * half;
        return 4.0 * s.eta * dc2 / (dc2 + w * w) * wcoth * one_minus_cos / (w * w);
    };
    double err = 0.0;
    // split at the first oscillation scale so the adaptive rule resolves both pieces
    double a = std::max(10.0 / t, 10.0 * s.delta_c);
    double lo = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, a, 20, 1e-13, &err);
    double hi = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, a, std::numeric_limits<double>::infinity(), 20, 1e-13, &err);
    return lo + hi;
}

double pure_dephasing_sz(const BathParams& b, double omega0, double t) {
    return std::cos(2.0 * omega0 * t) * std::exp(-dephasing_exponent(b, t));
}

// ---- tiny bath ----------------------------------------------------------------

MatX annihilation(int dim) {
    MatX a = MatX::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

MatX mode_coupling(const BathMode& m) {
    MatX a = annihilation(m.fock_dim);
    double c = -m.kappa / std::sqrt(2.0 * m.omega);
    return c * (a + a.adjoint());
}

VecX mode_energies(const BathMode& m) {
    VecX e(m.fock_dim);
    for (int n = 0; n < m.fock_dim; ++n) e(n) = m.omega * (n + 0.5);
    return e;
}

MatX thermal_state(const BathMode& m, double kT) {
    MatX rho = MatX::Zero(m.fock_dim, m.fock_dim);
    if (kT == 0.0) {
        rho(0, 0) = 1.0;
        return rho;
    }
    double z = 0.0;
    for (int n = 0; n < m.fock_dim; ++n) z += std::exp(-m.omega * n / kT);
    for (int n = 0; n < m.fock_dim; ++n) rho(n, n) = std::exp(-m.omega * n / kT) / z;
    return rho;
}

MatX coherent_state(int dim, cplx alpha) {
    VecX v(dim);
    cplx amp = 1.0;
    for (int n = 0; n < dim; ++n) {
        if (n > 0) amp *= alpha / std::sqrt(static_cast<double>(n));
        v(n) = amp;
    }
    v.normalize();
    return v * v.adjoint();
}

void validate(const TinyBathSpec& s) {
    if (s.modes.empty()) throw ConfigError("tiny bath: at least one mode is required");
    std::size_t dim = 2;
    for (const auto& m : s.modes) {
        if (m.fock_dim < 4) throw ConfigError("tiny bath: fock_dim must be >= 4");
        if (!(m.omega > 0.0)) throw ConfigError("tiny bath: mode omega must be > 0");
        dim *= static_cast<std::size_t>(m.fock_dim);
    }
    if (dim > 512) throw ConfigError("tiny bath: total dimension exceeds 512");
    if (!(s.kT >= 0.0)) throw ConfigError("tiny bath: kT must be >= 0");
    if (!s.initial.empty() && s.initial.size() != s.modes.size())
        throw ConfigError("tiny bath: one initial state per mode is required");
}

std::vector<MatX> initial_bath_states(const TinyBathSpec& s) {
    validate(s);
    std::vector<MatX> out;
    for (std::size_t n = 0; n < s.modes.size(); ++n) {
        MatX rho = s.initial.empty() ? thermal_state(s.modes[n], s.kT) : s.initial[n];
        int d = s.modes[n].fock_dim;
        if (rho.rows() != d || rho.cols() != d) throw ConfigError("tiny bath: initial state has wrong dimension");
        double top = std::abs(rho(d - 1, d - 1));
        if (top >= 1e-6) {
            std::ostringstream os;
            os << "tiny bath: mode " << n << " top Fock population " << top << " >= 1e-6; raise fock_dim";
            throw ConfigError(os.str());
        }
        out.push_back(rho);
    }
    return out;
}

MatX total_hamiltonian(const TinyBathSpec& s, const SpinBosonParams& p) {
    validate(s);
    Eigen::Index dim_e = 1;
    for (const auto& m : s.modes) dim_e *= m.fock_dim;
    MatX he = MatX::Zero(dim_e, dim_e);
    MatX b = MatX::Zero(dim_e, dim_e);
    for (std::size_t n = 0; n < s.modes.size(); ++n) {
        MatX left = MatX::Identity(1, 1);
        MatX right = MatX::Identity(1, 1);
        for (std::size_t k = 0; k < n; ++k) left = kron(left, MatX::Identity(s.modes[k].fock_dim, s.modes[k].fock_dim));
        for (std::size_t k = n + 1; k < s.modes.size(); ++k)
            right = kron(right, MatX::Identity(s.modes[k].fock_dim, s.modes[k].fock_dim));
        MatX en = mode_energies(s.modes[n]).asDiagonal();
        he += kron(kron(left, en), right);
        b += kron(kron(left, mode_coupling(s.modes[n])), right);
    }
    MatX hs = system_hamiltonian(p);
    MatX sx = pauli::sx();
    return kron(hs, MatX::Identity(dim_e, dim_e)) + kron(MatX::Identity(2, 2), he) + kron(sx, b);
}

MatX total_density(const TinyState& st) {
    MatX d = st.rho_s;
    for (const auto& r : st.rho_n) d = kron(d, r);
    return d;
}

ExactReport tiny_bath_exact(const TinyBathSpec& s, const SpinBosonParams& p, double dt, double t_max,
                            std::size_t output_stride) {
    validate(p);
    auto bath0 = initial_bath_states(s);
    if (!(dt > 0.0) || !(t_max > 0.0) || output_stride == 0) throw ConfigError("tiny bath exact: bad time grid");
    auto n_steps = static_cast<std::size_t>(std::llround(t_max / dt));
    if (n_steps % output_stride != 0) throw ConfigError("tiny bath exact: output_stride must divide t_max/dt");

    const auto& nb = p.initial_bloch;
    TinyState st{density_from_bloch(nb[0], nb[1], nb[2]), bath0};
    MatX d = total_density(st);
    MatX h = total_hamiltonian(s, p);
    Eigen::SelfAdjointEigenSolver<MatX> eig(h);
    double dt_out = dt * static_cast<double>(output_stride);
    VecX phase = (-I * dt_out * eig.eigenvalues().cast<cplx>()).array().exp();
    MatX u = eig.eigenvectors() * phase.asDiagonal() * eig.eigenvectors().adjoint();

    Eigen::Index dim_e = d.rows() / 2;
    std::size_t n_out = n_steps / output_stride + 1;
    ExactReport rep;
    rep.series = empty_series(n_out);
    double purity0 = (d * d).trace().real();

    auto record = [&](std::size_t k) {
        Mat2 rs;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) rs(a, b) = d.block(a * dim_e, b * dim_e, dim_e, dim_e).trace();
        put(rep.series, k, static_cast<double>(k) * dt_out, observables(rs));
        rep.max_trace_dev = std::max(rep.max_trace_dev, std::abs(d.trace() - 1.0));
        rep.max_purity_dev = std::max(rep.max_purity_dev, std::abs((d * d).trace().real() - purity0));
        // top Fock level population of every mode
        std::size_t stride_after = static_cast<std::size_t>(dim_e);
        for (std::size_t n = 0; n < s.modes.size(); ++n) {
            auto dn = static_cast<std::size_t>(s.modes[n].fock_dim);
            stride_after /= dn;
            double pop = 0.0;
            for (Eigen::Index i = 0; i < d.rows(); ++i) {
                std::size_t e = static_cast<std::size_t>(i % dim_e);
                if ((e / stride_after) % dn == dn - 1) pop += d(i, i).real();
            }
            rep.max_top_population = std::max(rep.max_top_population, pop);
        }
    };
    record(0);
    for (std::size_t k = 1; k < n_out; ++k) {
        d = u * d * u.adjoint();
        record(k);
    }
    if (rep.max_top_population > 1e-4) {
        std::ostringstream os;
        os << "tiny bath exact: top Fock population reached " << rep.max_top_population
           << " > 1e-4; raise fock_dim";
        throw ConfigError(os.str());
    }
    return rep;
}

namespace {

struct TinyModel {
    Mat2 hs;
    std::vector<MatX> b;       // B_n
    std::vector<VecX> energy;  // diagonal h_n
};

TinyModel tiny_model(const TinyBathSpec& s, const SpinBosonParams& p) {
    TinyModel m;
    m.hs = system_hamiltonian(p);
    for (const auto& mode : s.modes) {
        m.b.push_back(mode_coupling(mode));
        m.energy.push_back(mode_energies(mode));
    }
    return m;
}

// Coupling and noise part of one step; with_free adds the -i dt [h, .] terms (plain Euler)
void interaction_step(TinyState& st, const TinyModel& m, const NoiseIncrement& inc, double dt, Scheme scheme,
                      bool with_free) {
    const Mat2 sx = pauli::sx();
    XiLambda xl = derived_xi_lambda(inc);
    const std::size_t nm = st.rho_n.size();

    Mat2 rs = st.rho_s;
    Mat2 drs = Mat2::Zero();
    std::vector<MatX> drn(nm);
    if (scheme == Scheme::SMF) {
        cplx q = (sx * rs).trace();
        std::vector<cplx> bn(nm);
        cplx btot = 0.0;
        for (std::size_t n = 0; n < nm; ++n) {
            bn[n] = (m.b[n] * st.rho_n[n]).trace();
            btot += bn[n];
        }
        Mat2 qt = sx - q * Mat2::Identity();
        Mat2 h = (with_free ? m.hs : Mat2::Zero()) + btot * sx;
        drs = -I * dt * comm(h, rs) + xl.dxi_s * (qt * rs) + xl.dlambda_s * (rs * qt);
        for (std::size_t n = 0; n < nm; ++n) {
            const MatX& r = st.rho_n[n];
            MatX bt = m.b[n] - bn[n] * MatX::Identity(r.rows(), r.cols());
            MatX hn = q * m.b[n];
            if (with_free) hn += MatX(m.energy[n].asDiagonal());
            drn[n] = -I * dt * (hn * r - r * hn) + xl.dxi_e * (bt * r) + xl.dlambda_e * (r * bt);
        }
    } else {
        if (with_free) drs = -I * dt * comm(m.hs, rs);
        drs += xl.dxi_s * (sx * rs) + xl.dlambda_s * (rs * sx);
        for (std::size_t n = 0; n < nm; ++n) {
            const MatX& r = st.rho_n[n];
            drn[n] = xl.dxi_e * (m.b[n] * r) + xl.dlambda_e * (r * m.b[n]);
            if (with_free) {
                MatX hn = m.energy[n].asDiagonal();
                drn[n] += -I * dt * (hn * r - r * hn);
            }
        }
    }
    st.rho_s += drs;
    for (std::size_t n = 0; n < nm; ++n) st.rho_n[n] += drn[n];
}

Bloch tiny_observables(const TinyState& st) {
    cplx w = 1.0;
    for (const auto& r : st.rho_n) w *= r.trace();
    Bloch b = observables(st.rho_s);
    for (auto& v : b) v *= w;
    return b;
}

}  // namespace

void tiny_euler_step(TinyState& st, const TinyBathSpec& s, const SpinBosonParams& p, const NoiseIncrement& inc,
                     double dt, Scheme scheme) {
    TinyModel m = tiny_model(s, p);
    interaction_step(st, m, inc, dt, scheme, true);
}

EnsembleResult tiny_bath_smf(const TinyBathSpec& s, const SpinBosonParams& p, const TinyRunConfig& cfg,
                             std::vector<double>* lambda_stat) {
    validate(p);
    auto bath0 = initial_bath_states(s);
    if (!(cfg.dt > 0.0) || !(cfg.t_max > 0.0) || cfg.output_stride == 0 || cfg.n_traj == 0)
        throw ConfigError("tiny bath smf: bad run configuration");
    auto n_steps = static_cast<std::size_t>(std::llround(cfg.t_max / cfg.dt));
    if (n_steps % cfg.output_stride != 0) throw ConfigError("tiny bath smf: output_stride must divide t_max/dt");

    const TinyModel model = tiny_model(s, p);
    const Mat2 u_half = free_propagator(p, 0.5 * cfg.dt);
    std::vector<MatX> phase_half;
    for (const auto& e : model.energy) {
        MatX ph(e.size(), e.size());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            for (Eigen::Index j = 0; j < e.size(); ++j) ph(i, j) = std::exp(-I * 0.5 * cfg.dt * (e(i) - e(j)));
        phase_half.push_back(ph);
    }
    auto free_half = [&](TinyState& st) {
        st.rho_s = u_half * st.rho_s * u_half.adjoint();
        for (std::size_t n = 0; n < st.rho_n.size(); ++n) st.rho_n[n] = st.rho_n[n].cwiseProduct(phase_half[n]);
    };

    const auto& nb = p.initial_bloch;
    const TinyState init{density_from_bloch(nb[0], nb[1], nb[2]), bath0};
    const std::size_t n_out = n_steps / cfg.output_stride + 1;

    const bool track = lambda_stat != nullptr;
    const Eigen::Index dim = track ? total_density(init).rows() : 0;
    struct Acc {
        SeriesAccumulator series;
        std::size_t n_div{0};
        std::vector<MatX> d_sum;     // sum of D per output
        std::vector<double> d_norm;  // sum of Tr(D^dag D) per output
        std::vector<MatX> d_traj;    // current trajectory, kept until it is known to be finite
        void merge(const Acc& o) {
            series.merge(o.series);
            n_div += o.n_div;
            for (std::size_t k = 0; k < d_sum.size(); ++k) {
                d_sum[k] += o.d_sum[k];
                d_norm[k] += o.d_norm[k];
            }
        }
    };
    auto make = [n_out, track, dim] {
        Acc a{SeriesAccumulator(n_out), 0, {}, {}, {}};
        if (track) {
            a.d_sum.assign(n_out, MatX::Zero(dim, dim));
            a.d_norm.assign(n_out, 0.0);
            a.d_traj.assign(n_out, MatX::Zero(dim, dim));
        }
        return a;
    };
    auto body = [&](std::size_t i, Acc& acc) {
        Rng rng = trajectory_stream(cfg.seed, i);
        TinyState st = init;
        std::vector<Bloch> samples;
        samples.reserve(n_out);
        samples.push_back(tiny_observables(st));
        if (track) acc.d_traj[0] = total_density(st);
        for (std::size_t n = 0; n < n_steps; ++n) {
            NoiseIncrement inc = sample_increment(cfg.dt, NoiseVariant::ComplexExact, rng);
            free_half(st);
            interaction_step(st, model, inc, cfg.dt, cfg.scheme, false);
            free_half(st);
            if ((n + 1) % cfg.output_stride == 0) {
                Bloch b = tiny_observables(st);
                bool ok = true;
                for (const auto& v : b)
                    ok = ok && std::isfinite(v.real()) && std::isfinite(v.imag()) && std::abs(v) <= cfg.divergence_bound;
                if (!ok || !finite_bounded(st.rho_s, cfg.divergence_bound)) {
                    ++acc.n_div;
                    return;
                }
                if (track) acc.d_traj[samples.size()] = total_density(st);
                samples.push_back(b);
            }
        }
        acc.series.add(samples);
        if (track)
            for (std::size_t k = 0; k < n_out; ++k) {
                acc.d_sum[k] += acc.d_traj[k];
                acc.d_norm[k] += acc.d_traj[k].squaredNorm();
            }
    };
    Acc total = run_blocks<Acc>(cfg.n_traj, resolve_workers(cfg.workers), make, body);

    RunConfig rc;
    rc.n_traj = cfg.n_traj;
    rc.master_seed = cfg.seed;
    rc.output_stride = cfg.output_stride;
    rc.integrator.dt = cfg.dt;
    rc.divergence_threshold = cfg.divergence_threshold;
    if (track) {
        lambda_stat->assign(n_out, std::numeric_limits<double>::quiet_NaN());
        auto kept = static_cast<double>(cfg.n_traj - total.n_div);
        if (kept > 0.0)
            for (std::size_t k = 0; k < n_out; ++k)
                (*lambda_stat)[k] = total.d_norm[k] / kept - (total.d_sum[k] / kept).squaredNorm();
    }
    return finish(rc, total.series, total.n_div);
}

OneStepReport one_step_mean_check(const TinyBathSpec& s, const SpinBosonParams& p, double dt,
                                  std::size_t n_samples, Scheme scheme, std::uint64_t seed, unsigned workers) {
    validate(p);
    if (n_samples < 2) throw ConfigError("one-step check: need at least 2 samples");
    auto bath0 = initial_bath_states(s);
    const auto& nb = p.initial_bloch;
    const TinyState init{density_from_bloch(nb[0], nb[1], nb[2]), bath0};
    const TinyModel model = tiny_model(s, p);
    const MatX d0 = total_density(init);
    const MatX h = total_hamiltonian(s, p);
    const Eigen::Index dim = d0.rows();

    struct Acc {
        std::vector<Moments> m;
        void merge(const Acc& o) {
            for (std::size_t k = 0; k < m.size(); ++k) m[k].merge(o.m[k]);
        }
    };
    auto make = [dim] { return Acc{std::vector<Moments>(static_cast<std::size_t>(2 * dim * dim))}; };
    auto body = [&](std::size_t i, Acc& acc) {
        Rng rng = trajectory_stream(seed, i);
        NoiseIncrement inc = sample_increment(dt, NoiseVariant::ComplexExact, rng);
        TinyState st = init;
        interaction_step(st, model, inc, dt, scheme, true);
        MatX dd = total_density(st) - d0;
        for (Eigen::Index k = 0; k < dd.size(); ++k) {
            acc.m[2 * k].add(dd.data()[k].real());
            acc.m[2 * k + 1].add(dd.data()[k].imag());
        }
    };
    Acc total = run_blocks<Acc>(n_samples, resolve_workers(workers), make, body);

    OneStepReport rep;
    rep.exact_increment = -I * dt * (h * d0 - d0 * h);
    rep.mean_increment.resize(dim, dim);
    rep.stderr_elem.resize(dim, dim);
    double n = static_cast<double>(n_samples);
    for (Eigen::Index k = 0; k < dim * dim; ++k) {
        const Moments& re = total.m[2 * k];
        const Moments& im = total.m[2 * k + 1];
        rep.mean_increment.data()[k] = cplx(re.mean, im.mean);
        double se_re = std::sqrt(re.variance() / n);
        double se_im = std::sqrt(im.variance() / n);
        rep.stderr_elem.data()[k] = std::max(se_re, se_im);
        cplx ex = rep.exact_increment.data()[k];
        for (auto [dev, se] : {std::pair{std::abs(re.mean - ex.real()), se_re},
                               std::pair{std::abs(im.mean - ex.imag()), se_im}}) {
            double ratio = se > 0.0 ? dev / (4.0 * se) : (dev <= 1e-15 ? 0.0 : std::numeric_limits<double>::infinity());
            rep.max_ratio = std::max(rep.max_ratio, ratio);
        }
    }
    rep.pass = rep.max_ratio <= 1.0;
    return rep;
}

LambdaStatReport lambda_stat_growth_check(const TinyBathSpec& s, const SpinBosonParams& p, double dt,
                                          std::size_t n_samples, Scheme scheme, std::uint64_t seed,
                                          unsigned workers) {
    validate(p);
    const auto& nb = p.initial_bloch;
    double bn2 = nb[0] * nb[0] + nb[1] * nb[1] + nb[2] * nb[2];
    if (std::abs(bn2 - 1.0) > 1e-9) throw PreconditionError("lambda_stat check: system state must be pure");
    auto bath0 = initial_bath_states(s);
    for (const auto& r : bath0)
        if (std::abs((r * r).trace().real() - 1.0) > 1e-9)
            throw PreconditionError("lambda_stat check: bath state must be pure (use kT = 0)");
    if (n_samples < 2) throw ConfigError("lambda_stat check: need at least 2 samples");

    const TinyState init{density_from_bloch(nb[0], nb[1], nb[2]), bath0};
    const TinyModel model = tiny_model(s, p);
    const Eigen::Index dim = total_density(init).rows();
    auto sample = [&](std::size_t i) {
        Rng rng = trajectory_stream(seed, i);
        NoiseIncrement inc = sample_increment(dt, NoiseVariant::ComplexExact, rng);
        TinyState st = init;
        interaction_step(st, model, inc, dt, scheme, true);
        return total_density(st);
    };
    unsigned w = resolve_workers(workers);

    struct SumAcc {
        MatX sum;
        void merge(const SumAcc& o) { sum += o.sum; }
    };
    SumAcc tot = run_blocks<SumAcc>(
        n_samples, w, [dim] { return SumAcc{MatX::Zero(dim, dim)}; },
        [&](std::size_t i, SumAcc& a) { a.sum += sample(i); });
    const MatX mean = tot.sum / static_cast<double>(n_samples);

    struct DevAcc {
        Moments m;
        void merge(const DevAcc& o) { m.merge(o.m); }
    };
    DevAcc dev = run_blocks<DevAcc>(
        n_samples, w, [] { return DevAcc{}; },
        [&](std::size_t i, DevAcc& a) { a.m.add((sample(i) - mean).squaredNorm()); });

    LambdaStatReport rep;
    rep.empirical = dev.m.mean;  // lambda_stat(0) = 0 for identical pure initial states
    rep.stderr = std::sqrt(dev.m.variance() / static_cast<double>(n_samples));

    const Mat2 sx = pauli::sx();
    double q = (sx * init.rho_s).trace().real();
    double q2 = (sx * sx * init.rho_s).trace().real();
    double b = 0.0, b2 = 0.0, var_b = 0.0;
    for (std::size_t n = 0; n < bath0.size(); ++n) {
        double bn = (model.b[n] * bath0[n]).trace().real();
        double bn2v = (model.b[n] * model.b[n] * bath0[n]).trace().real();
        var_b += bn2v - bn * bn;
        b += bn;
    }
    b2 = var_b + b * b;
    rep.predicted_smf = 2.0 * dt * ((q2 - q * q) + var_b);
    rep.predicted_plain = 2.0 * dt * (q2 + b2);
    double target = scheme == Scheme::SMF ? rep.predicted_smf : rep.predicted_plain;
    rep.z = rep.stderr > 0.0 ? (rep.empirical - target) / rep.stderr : 0.0;
    return rep;
}

// ---- single-mode moments ----------------------------------------------------------

TinyBathSpec default_tiny_bath() {
    TinyBathSpec s;
    s.kT = 0.5;
    s.modes = {{2.0, 0.3, 8}, {3.0, 0.3, 8}};
    return s;
}

SpinBosonParams default_tiny_system() {
    SpinBosonParams p;
    p.omega0 = 1.0;
    p.epsilon = 0.5;
    p.initial_bloch = {0.0, 0.0, 1.0};
    return p;
}

TinyBathSpec one_step_bath() {
    TinyBathSpec s;
    s.modes = {{1.0, 0.5, 4}};
    s.initial = {coherent_state(4, cplx{0.1, 0.05})};
    return s;
}

TinyBathSpec lambda_stat_bath() {
    TinyBathSpec s;
    s.kT = 0.0;
    s.modes = {{1.0, 0.5, 6}};
    return s;
}

SpinBosonParams check_system() {
    SpinBosonParams p;
    p.omega0 = 1.0;
    p.epsilon = 0.5;
    p.initial_bloch = {0.6, 0.0, 0.8};
    return p;
}

double thermal_occupation(double omega, double kT) {
    if (kT == 0.0) return 0.0;
    return 0.5 * (1.0 / std::tanh(omega / (2.0 * kT)) - 1.0);
}

MomentLoadings raw_moment_loadings(const ModeMoments& m, double omega, double c, cplx q) {
    const cplx a = m.a, d = m.ad;
    // raw second moments
    const cplx aa = a * a + m.s_mm;
    const cplx dd = d * d + m.s_pp;
    const cplx da = d * a + m.s_pm;  // <a^dag a>
    const cplx ad = da + 1.0;        // <a a^dag>
    // normal-ordered third moments (Wick)
    const cplx aaa = a * a * a + 3.0 * a * m.s_mm;
    const cplx ddd = d * d * d + 3.0 * d * m.s_pp;
    const cplx daa = d * a * a + d * m.s_mm + 2.0 * a * m.s_pm;
    const cplx dda = d * d * a + a * m.s_pp + 2.0 * d * m.s_pm;
    const cplx b = c * (a + d);

    // X order: a, a^dag, aa, a^dag a^dag, a^dag a
    const std::array<cplx, 5> x{a, d, aa, dd, da};
    // <X a>, <X a^dag>, <a X>, <a^dag X>
    const std::array<cplx, 5> xa{aa, da, aaa, dda, daa};
    const std::array<cplx, 5> xd{ad, dd, daa + 2.0 * a, ddd, dda + d};
    const std::array<cplx, 5> ax{aa, ad, aaa, dda + 2.0 * d, daa + a};
    const std::array<cplx, 5> dx{da, dd, daa, ddd, dda};
    // <[X, h]> and <[X, B]>
    const std::array<cplx, 5> xh{omega * a, -omega * d, 2.0 * omega * aa, -2.0 * omega * dd, 0.0};
    const std::array<cplx, 5> xb{c, -c, 2.0 * c * a, -2.0 * c * d, c * (d - a)};

    MomentLoadings l;
    for (int k = 0; k < 5; ++k) {
        l.xi[k] = c * (xa[k] + xd[k]) - x[k] * b;
        l.lambda[k] = c * (ax[k] + dx[k]) - b * x[k];
        l.drift[k] = -I * (xh[k] + q * xb[k]);
    }
    return l;
}

ModeMoments moment_increment(const ModeMoments& m, double omega, double c, cplx q, cplx dxi, cplx dlambda,
                             double dt, NoiseVariant variant) {
    MomentLoadings l = raw_moment_loadings(m, omega, c, q);
    std::array<cplx, 5> dx;
    for (int k = 0; k < 5; ++k) dx[k] = l.drift[k] * dt + l.xi[k] * dxi + l.lambda[k] * dlambda;

    // expected quadratic variations of the environment increments
    cplx xx = 0.0, xl = 0.0, ll = 0.0;
    if (variant == NoiseVariant::RealApproximate) xl = dt;
    auto qv = [&](int i, int j) {
        return l.xi[i] * l.xi[j] * xx + (l.xi[i] * l.lambda[j] + l.lambda[i] * l.xi[j]) * xl +
               l.lambda[i] * l.lambda[j] * ll;
    };

    ModeMoments out;
    out.a = dx[0];
    out.ad = dx[1];
    out.s_mm = dx[2] - 2.0 * m.a * dx[0] - qv(0, 0);
    out.s_pp = dx[3] - 2.0 * m.ad * dx[1] - qv(1, 1);
    out.s_pm = dx[4] - m.ad * dx[0] - m.a * dx[1] - qv(1, 0);
    return out;
}

MomentCheckReport single_mode_moment_check(double omega, double kappa, double kT, double dt, std::size_t steps,
                                           std::uint64_t seed, NoiseVariant variant) {
    if (!(omega > 0.0) || !(dt > 0.0) || !(kT >= 0.0)) throw ConfigError("moment check: bad parameters");
    MomentCheckReport rep;
    rep.nbar = thermal_occupation(omega, kT);
    const double c = -kappa / std::sqrt(2.0 * omega);
    ModeMoments m{0.0, 0.0, 0.0, 0.0, rep.nbar};
    Rng rng = trajectory_stream(seed, 0);
    for (std::size_t n = 0; n < steps; ++n) {
        NoiseIncrement inc = sample_increment(dt, variant, rng);
        XiLambda xl = derived_xi_lambda(inc);
        cplx q = std::cos(2.0 * static_cast<double>(n) * dt);  // any system signal drives the first moments
        ModeMoments d = moment_increment(m, omega, c, q, xl.dxi_e, xl.dlambda_e, dt, variant);
        m.a += d.a;
        m.ad += d.ad;
        m.s_mm += d.s_mm;
        m.s_pp += d.s_pp;
        m.s_pm += d.s_pm;
        rep.max_s_mm = std::max(rep.max_s_mm, std::abs(m.s_mm));
        rep.max_s_pp = std::max(rep.max_s_pp, std::abs(m.s_pp));
        rep.max_s_mp_dev = std::max(rep.max_s_mp_dev, std::abs(m.s_pm + 1.0 - (rep.nbar + 1.0)));
    }
    rep.pass = rep.max_s_mm <= 1e-6 && rep.max_s_pp <= 1e-6 && rep.max_s_mp_dev <= 1e-6;
    return rep;
}

}  // namespace smf
