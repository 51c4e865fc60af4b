#include "smf/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace smf {

namespace {

struct EnsembleAcc {
    SeriesAccumulator series;
    std::size_t n_divergent{0};

    void merge(const EnsembleAcc& o) {
        series.merge(o.series);
        n_divergent += o.n_divergent;
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void validate(const RunConfig& c) {
    validate(c.params);
    validate(c.bath);
    validate(c.integrator);
    if (c.n_traj < 1) throw ConfigError("n_traj must be >= 1");
    if (c.output_stride < 1) throw ConfigError("output_stride must be >= 1");
    if (c.integrator.steps() % c.output_stride != 0)
        throw ConfigError("output_stride must divide the number of steps t_max/dt");
    if (!(c.divergence_threshold >= 0.0 && c.divergence_threshold <= 1.0))
        throw ConfigError("divergence_threshold must lie in [0, 1]");
}

void Moments::add(double x) {
    n += 1.0;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
}

void Moments::merge(const Moments& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
        *this = o;
        return;
    }
    double tot = n + o.n;
    double d = o.mean - mean;
    mean += d * o.n / tot;
    m2 += o.m2 + d * d * n * o.n / tot;
    n = tot;
}

double Moments::variance() const { return n < 2.0 ? 0.0 : m2 / (n - 1.0); }

void SeriesAccumulator::add(const std::vector<Bloch>& samples) {
    for (std::size_t k = 0; k < slots.size() && k < samples.size(); ++k)
        for (int o = 0; o < 3; ++o) {
            slots[k][2 * o].add(samples[k][o].real());
            slots[k][2 * o + 1].add(samples[k][o].imag());
        }
}

void SeriesAccumulator::merge(const SeriesAccumulator& o) {
    for (std::size_t k = 0; k < slots.size(); ++k)
        for (int j = 0; j < 6; ++j) slots[k][j].merge(o.slots[k][j]);
}

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SMF_SIM_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

EnsembleResult finish(const RunConfig& cfg, const SeriesAccumulator& acc, std::size_t n_divergent) {
    EnsembleResult r;
    std::size_t n_out = acc.slots.size();
    r.times.resize(n_out);
    for (int o = 0; o < 3; ++o) {
        r.mean[o].resize(n_out);
        r.err[o].resize(n_out);
    }
    for (std::size_t k = 0; k < n_out; ++k) {
        r.times[k] = static_cast<double>(k * cfg.output_stride) * cfg.integrator.dt;
        for (int o = 0; o < 3; ++o) {
            const Moments& re = acc.slots[k][2 * o];
            const Moments& im = acc.slots[k][2 * o + 1];
            r.mean[o][k] = re.n > 0.0 ? cplx(re.mean, im.mean)
                                      : cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
            double sd = std::sqrt(std::max(re.variance(), im.variance()));
            r.err[o][k] = re.n > 0.0 ? sd / std::sqrt(re.n) : 0.0;
        }
    }
    r.n_traj = cfg.n_traj;
    r.n_divergent = n_divergent;
    r.master_seed = cfg.master_seed;
    double limit = cfg.divergence_threshold * static_cast<double>(cfg.n_traj);
    if (static_cast<double>(n_divergent) > limit) {
        r.failed = true;
        std::ostringstream os;
        os << n_divergent << " of " << cfg.n_traj << " trajectories diverged (allowed fraction "
           << cfg.divergence_threshold << ")";
        r.message = os.str();
    }
    return r;
}

EnsembleResult run_ensemble(const RunConfig& cfg, Method method) {
    validate(cfg);
    const auto& ic = cfg.integrator;
    KernelTable table = build_kernel_table(cfg.bath, static_cast<double>(ic.steps()) * ic.dt, ic.dt);
    ConvolutionPlan plan = make_plan(table, ic.dt, ic.steps(), ic.convolution);
    return run_ensemble(cfg, plan, method);
}

EnsembleResult run_ensemble(const RunConfig& cfg, const ConvolutionPlan& plan, Method method) {
    validate(cfg);
    const std::size_t n_out = cfg.integrator.steps() / cfg.output_stride + 1;
    auto make = [n_out] { return EnsembleAcc{SeriesAccumulator(n_out), 0}; };
    auto body = [&](std::size_t i, EnsembleAcc& acc) {
        Rng rng = trajectory_stream(cfg.master_seed, i);
        TrajectoryResult tr = method == Method::Density
                                  ? run_trajectory(cfg.params, plan, cfg.integrator, cfg.output_stride, rng)
                                  : run_trajectory_sse(cfg.params, plan, cfg.integrator, cfg.output_stride, rng);
        if (tr.divergent)
            ++acc.n_divergent;
        else
            acc.series.add(tr.samples);
    };
    EnsembleAcc total = run_blocks<EnsembleAcc>(cfg.n_traj, resolve_workers(cfg.workers), make, body);
    return finish(cfg, total.series, total.n_divergent);
}

CompareReport compare_runs(const EnsembleResult& a, const EnsembleResult& b, std::array<bool, 3> use,
                           double t_limit) {
    if (a.times.size() != b.times.size()) throw ConfigError("compare: time grids differ in length");
    CompareReport rep;
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k])))
            throw ConfigError("compare: time grids differ");
        if (a.times[k] > t_limit + 1e-12) break;
        double dev = 0.0;
        double z = 0.0;
        for (int o = 0; o < 3; ++o) {
            if (!use[o]) continue;
            double d = std::abs(a.mean[o][k].real() - b.mean[o][k].real());
            if (std::isnan(d)) d = std::numeric_limits<double>::infinity();
            double e = std::hypot(a.err[o][k], b.err[o][k]);
            // two deterministic values: only roundoff is allowed
            double scale = std::max(1.0, std::abs(a.mean[o][k].real()));
            double zz = e > 0.0 ? d / e : (d > 1e-12 * scale ? std::numeric_limits<double>::infinity() : 0.0);
            dev = std::max(dev, d);
            z = std::max(z, zz);
        }
        rep.deviation.push_back(dev);
        rep.z.push_back(z);
        if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            rep.t_at_max = a.times[k];
        }
        rep.max_z = std::max(rep.max_z, z);
    }
    return rep;
}

std::string csv_header() {
    return "t,mean_sx_re,mean_sx_im,err_sx,mean_sy_re,mean_sy_im,err_sy,mean_sz_re,mean_sz_im,err_sz";
}

std::string to_csv(const EnsembleResult& r) {
    std::string out = csv_header() + "\n";
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        out += fmt(r.times[k]);
        for (int o = 0; o < 3; ++o) {
            out += "," + fmt(r.mean[o][k].real()) + "," + fmt(r.mean[o][k].imag()) + "," + fmt(r.err[o][k]);
        }
        out += "\n";
    }
    return out;
}

void write_csv(const std::string& path, const EnsembleResult& r) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << to_csv(r);
    if (!f) throw std::runtime_error("write failed: " + path);
}

EnsembleResult read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(f, line) || line != csv_header())
        throw ConfigError(path + ": header does not match the run CSV schema");
    EnsembleResult r;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
        if (v.size() != 10) throw ConfigError(path + ": row with " + std::to_string(v.size()) + " columns");
        r.times.push_back(v[0]);
        for (int o = 0; o < 3; ++o) {
            r.mean[o].emplace_back(v[1 + 3 * o], v[2 + 3 * o]);
            r.err[o].push_back(v[3 + 3 * o]);
        }
    }
    return r;
}

}  // namespace smf
