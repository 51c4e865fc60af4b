#include "smf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smf {

namespace {

bool finite_and_bounded(const Mat2& m, double bound) {
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const cplx& v = m(i, j);
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
            if (std::abs(v) > bound) return false;
        }
    return true;
}

Mat2 commutator_drift(const Mat2& h, const Mat2& rho) { return -I * (h * rho - rho * h); }

}  // namespace

void validate(const SpinBosonParams& p) {
    const auto& n = p.initial_bloch;
    double norm = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (!(norm <= 1.0 + 1e-12)) throw ConfigError("params.initial_bloch must have norm <= 1");
    if (!std::isfinite(p.omega0) || !std::isfinite(p.epsilon))
        throw ConfigError("params.omega0/epsilon must be finite");
}

Mat2 system_hamiltonian(const SpinBosonParams& p) {
    return p.omega0 * pauli::sx() + p.epsilon * pauli::sz();
}

std::size_t IntegratorConfig::steps() const {
    return static_cast<std::size_t>(std::llround(t_max / dt));
}

void validate(const IntegratorConfig& c) {
    if (!(c.dt > 0.0)) throw ConfigError("integrator.dt must be > 0");
    if (!(c.t_max > 0.0)) throw ConfigError("integrator.t_max must be > 0");
    double nf = c.t_max / c.dt;
    if (std::abs(nf - std::round(nf)) > 1e-6 * std::max(1.0, nf))
        throw ConfigError("integrator.t_max must be an integer number of dt steps");
    if (c.noise_substeps < 1) throw ConfigError("integrator.noise_substeps must be >= 1");
    if (!(c.divergence_bound > 0.0)) throw ConfigError("integrator.divergence_bound must be > 0");
}

ConvolutionPlan make_plan(const KernelTable& table, double dt, std::size_t n_steps, ConvolutionMode mode) {
    double mf = dt / table.dtau;
    auto m = static_cast<std::size_t>(std::llround(mf));
    if (m == 0 || std::abs(mf - static_cast<double>(m)) > 1e-9 * mf)
        throw ConfigError("kernel table spacing must divide the integrator step");
    if (static_cast<double>(n_steps) * dt > table.tau_max() * (1.0 + 1e-12) + 1e-12) {
        std::ostringstream os;
        os << "kernel table covers tau <= " << table.tau_max() << " but the run needs "
           << static_cast<double>(n_steps) * dt;
        throw ConfigError(os.str());
    }

    ConvolutionPlan plan;
    plan.dt = dt;
    plan.n_steps = n_steps;
    plan.mode = mode;
    if (mode == ConvolutionMode::ExponentialRecursion) {
        for (const auto& t : table.d_terms) {
            plan.d_amp.push_back(t.amplitude);
            plan.d_decay.push_back(std::exp(-t.rate * dt));
        }
        for (const auto& t : table.d1_terms) {
            plan.d1_amp.push_back(t.amplitude);
            plan.d1_decay.push_back(std::exp(-t.rate * dt));
        }
        int K = static_cast<int>(table.d1_terms.size()) - 1;
        plan.d1_tail = d1_tail_window(table.bath, K, dt);
    } else {
        plan.d_lag.resize(n_steps + 1);
        plan.d1_lag.resize(n_steps + 1);
        for (std::size_t l = 0; l <= n_steps; ++l) {
            plan.d_lag[l] = table.d_values[l * m];
            plan.d1_lag[l] = table.d1_values[l * m];
        }
    }
    return plan;
}

MeanFieldSource::MeanFieldSource(const ConvolutionPlan& plan) : plan_(&plan) {
    if (plan.mode == ConvolutionMode::ExponentialRecursion) {
        s_d_.assign(plan.d_amp.size(), cplx{});
        s_d1_.assign(plan.d1_amp.size(), cplx{});
        ring_.assign(std::max<std::size_t>(plan.d1_tail.size(), 1), cplx{});
    } else {
        q_hist_.reserve(plan.n_steps);
        du_hist_.reserve(plan.n_steps);
        dv_hist_.reserve(plan.n_steps);
    }
}

cplx MeanFieldSource::value() const {
    const auto& p = *plan_;
    cplx b{};
    if (p.mode == ConvolutionMode::ExponentialRecursion) {
        for (std::size_t j = 0; j < s_d_.size(); ++j) b -= p.d_amp[j] * s_d_[j];
        for (std::size_t j = 0; j < s_d1_.size(); ++j) b += p.d1_amp[j] * s_d1_[j];
        std::size_t L = std::min(p.d1_tail.size(), step_);
        std::size_t cap = ring_.size();
        for (std::size_t l = 1; l <= L; ++l) {
            std::size_t k = step_ - l;
            b += p.d1_tail[l - 1] * ring_[k % cap];
        }
    } else {
        if (step_ > p.n_steps) throw ConfigError("mean field: step beyond kernel coverage");
        for (std::size_t k = 0; k < step_; ++k) {
            std::size_t lag = step_ - k;
            b += -p.d_lag[lag] * (q_hist_[k] * p.dt + du_hist_[k]) + p.d1_lag[lag] * dv_hist_[k];
        }
    }
    return b;
}

void MeanFieldSource::push(cplx q, cplx du_e, cplx dv_e) {
    const auto& p = *plan_;
    if (p.mode == ConvolutionMode::ExponentialRecursion) {
        cplx x = q * p.dt + du_e;
        for (std::size_t j = 0; j < s_d_.size(); ++j) s_d_[j] = p.d_decay[j] * (s_d_[j] + x);
        for (std::size_t j = 0; j < s_d1_.size(); ++j) s_d1_[j] = p.d1_decay[j] * (s_d1_[j] + dv_e);
        ring_[step_ % ring_.size()] = dv_e;
    } else {
        q_hist_.push_back(q);
        du_hist_.push_back(du_e);
        dv_hist_.push_back(dv_e);
    }
    ++step_;
}

TrajectoryState initial_state(const SpinBosonParams& p, const ConvolutionPlan& plan) {
    const auto& n = p.initial_bloch;
    return TrajectoryState{density_from_bloch(n[0], n[1], n[2]), 0, MeanFieldSource(plan), 0.0};
}

Mat2 drift_increment(const Mat2& rho, const Mat2& h, cplx b, double dt, DeterministicOrder order) {
    Mat2 H = h + b * pauli::sx();
    Mat2 k1 = commutator_drift(H, rho);
    if (order == DeterministicOrder::Euler) return dt * k1;
    Mat2 k2 = commutator_drift(H, rho + dt * k1);
    return 0.5 * dt * (k1 + k2);
}

Mat2 smf_update(const Mat2& rho, const Mat2& h, cplx b, const NoiseIncrement& inc, double dt,
                DeterministicOrder order) {
    const Mat2 sx = pauli::sx();
    cplx q = rho(0, 1) + rho(1, 0);
    Mat2 qt = sx - q * Mat2::Identity();
    Mat2 left = qt * rho;
    Mat2 right = rho * qt;
    return rho + drift_increment(rho, h, b, dt, order) + inc.du_s * (left + right) - I * inc.dv_s * (left - right);
}

void smf_step(TrajectoryState& state, const Mat2& h, const NoiseIncrement& inc, const IntegratorConfig& cfg) {
    cplx b = state.source.value();
    cplx q = state.rho(0, 1) + state.rho(1, 0);
    state.rho = smf_update(state.rho, h, b, inc, cfg.dt, cfg.order);
    state.source.push(q, inc.du_e, inc.dv_e);
    ++state.step_index;
    double scale = std::max(1.0, state.rho.cwiseAbs().maxCoeff());
    state.max_trace_error = std::max(state.max_trace_error, std::abs(state.rho.trace() - 1.0) / scale);
}

Bloch observables(const Mat2& rho) {
    // Tr(sigma_i rho)
    return {rho(0, 1) + rho(1, 0), I * (rho(0, 1) - rho(1, 0)), rho(0, 0) - rho(1, 1)};
}

NoiseIncrement step_increment(const IntegratorConfig& cfg, Rng& rng) {
    if (cfg.suppress_noise) return {};
    if (cfg.noise_substeps == 1) return sample_increment(cfg.dt, cfg.variant, rng);
    double sub = cfg.dt / cfg.noise_substeps;
    NoiseIncrement total;
    for (int i = 0; i < cfg.noise_substeps; ++i) total += sample_increment(sub, cfg.variant, rng);
    return total;
}

TrajectoryResult run_trajectory(const SpinBosonParams& p, const ConvolutionPlan& plan,
                                const IntegratorConfig& cfg, std::size_t output_stride, Rng& rng) {
    validate(p);
    validate(cfg);
    if (output_stride == 0) throw ConfigError("output_stride must be >= 1");
    const std::size_t n_steps = cfg.steps();
    if (n_steps > plan.n_steps) throw ConfigError("convolution plan shorter than the run");
    const Mat2 h = system_hamiltonian(p);

    TrajectoryResult res;
    res.samples.reserve(n_steps / output_stride + 1);
    TrajectoryState st = initial_state(p, plan);
    res.samples.push_back(observables(st.rho));
    for (std::size_t n = 0; n < n_steps; ++n) {
        NoiseIncrement inc = step_increment(cfg, rng);
        smf_step(st, h, inc, cfg);
        if (!finite_and_bounded(st.rho, cfg.divergence_bound)) {
            res.divergent = true;
            res.divergent_step = n + 1;
            res.reason = "non-finite or overflowing density";
            break;
        }
        if (st.max_trace_error > 1e-12) {
            res.divergent = true;
            res.divergent_step = n + 1;
            res.reason = "trace drift above 1e-12";
            break;
        }
        if ((n + 1) % output_stride == 0) res.samples.push_back(observables(st.rho));
    }
    res.max_trace_error = st.max_trace_error;
    return res;
}

TrajectoryResult run_trajectory_sse(const SpinBosonParams& p, const ConvolutionPlan& plan,
                                    const IntegratorConfig& cfg, std::size_t output_stride, Rng& rng) {
    validate(p);
    validate(cfg);
    const auto& nb = p.initial_bloch;
    double norm = std::sqrt(nb[0] * nb[0] + nb[1] * nb[1] + nb[2] * nb[2]);
    if (std::abs(norm - 1.0) > 1e-9) throw PreconditionError("SSE requires a pure initial state (|bloch| = 1)");
    if (output_stride == 0) throw ConfigError("output_stride must be >= 1");
    const std::size_t n_steps = cfg.steps();
    if (n_steps > plan.n_steps) throw ConfigError("convolution plan shorter than the run");

    const Mat2 h = system_hamiltonian(p);
    const Mat2 sx = pauli::sx();
    const Mat2 sy = pauli::sy();
    const Mat2 sz = pauli::sz();

    // +1 eigenvector of n.sigma: the larger column of the projector
    Mat2 proj = density_from_bloch(nb[0], nb[1], nb[2]);
    Eigen::Vector2cd phi1 = proj.col(0).norm() >= proj.col(1).norm() ? proj.col(0) : proj.col(1);
    phi1.normalize();
    Eigen::RowVector2cd phi2 = phi1.adjoint();

    auto sample = [&](const Eigen::Vector2cd& a, const Eigen::RowVector2cd& b) {
        cplx ov = (b * a)(0, 0);
        return Bloch{(b * sx * a)(0, 0) / ov, (b * sy * a)(0, 0) / ov, (b * sz * a)(0, 0) / ov};
    };

    TrajectoryResult res;
    res.samples.push_back(sample(phi1, phi2));
    MeanFieldSource source(plan);
    const double dt = cfg.dt;
    for (std::size_t n = 0; n < n_steps; ++n) {
        NoiseIncrement inc = step_increment(cfg, rng);
        XiLambda xl = derived_xi_lambda(inc);
        cplx ov = (phi2 * phi1)(0, 0);
        cplx q = (phi2 * sx * phi1)(0, 0) / ov;
        cplx b = source.value();
        Mat2 H = h + b * sx;
        Mat2 qt = sx - q * Mat2::Identity();

        Eigen::Vector2cd g1 = -I * (H * phi1);
        Eigen::RowVector2cd g2 = I * (phi2 * H);
        Eigen::Vector2cd d1 = dt * g1;
        Eigen::RowVector2cd d2 = dt * g2;
        if (cfg.order == DeterministicOrder::Heun) {
            Eigen::Vector2cd p1 = phi1 + dt * g1;
            Eigen::RowVector2cd p2 = phi2 + dt * g2;
            d1 = 0.5 * dt * (g1 + (-I * (H * p1)));
            d2 = 0.5 * dt * (g2 + I * (p2 * H));
        }
        Eigen::Vector2cd next1 = phi1 + d1 + xl.dxi_s * (qt * phi1);
        Eigen::RowVector2cd next2 = phi2 + d2 + xl.dlambda_s * (phi2 * qt);
        source.push(q, inc.du_e, inc.dv_e);

        double n1 = next1.norm();
        double n2 = next2.norm();
        bool finite = std::isfinite(n1) && std::isfinite(n2) && n1 > 0.0 && n2 > 0.0;
        if (finite) {
            phi1 = next1 / n1;
            phi2 = next2 / n2;
        }
        if (!finite || std::abs((phi2 * phi1)(0, 0)) < 1e-12) {
            res.divergent = true;
            res.divergent_step = n + 1;
            res.reason = finite ? "degenerate overlap <phi2|phi1>" : "non-finite state";
            break;
        }
        if ((n + 1) % output_stride == 0) {
            Bloch s = sample(phi1, phi2);
            bool ok = true;
            for (const auto& v : s) ok = ok && std::isfinite(v.real()) && std::isfinite(v.imag()) &&
                                     std::abs(v) <= cfg.divergence_bound;
            if (!ok) {
                res.divergent = true;
                res.divergent_step = n + 1;
                res.reason = "overflowing observable";
                break;
            }
            res.samples.push_back(s);
        }
    }
    return res;
}

}  // namespace smf
