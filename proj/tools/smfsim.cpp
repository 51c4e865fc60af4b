// Command-line driver for stochastic mean-field spin-boson runs
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smf/config.hpp"
#include "smf/ensemble.hpp"
#include "smf/reference.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smf;

namespace {

// Flags shared by every command that builds a RunConfig
struct RunFlags {
    std::string preset;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long long> n_traj;
    std::optional<double> dt;
    std::optional<double> t_max;
    std::optional<std::string> variant;
    std::optional<std::string> convolution;
    std::optional<unsigned> workers;
    std::optional<long long> stride;
    std::optional<double> eta_pi;
    std::optional<double> delta_c;
    std::optional<double> kbt;
    std::string scheme{"smf"};
    std::string output{"."};
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--preset", f.preset, "scenario preset")
        ->check(CLI::IsMember(preset_names()));
    app->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", f.seed, "master seed");
    app->add_option("--n-traj", f.n_traj, "number of trajectories");
    app->add_option("--dt", f.dt, "time step");
    app->add_option("--t-max", f.t_max, "final time");
    app->add_option("--variant", f.variant, "noise variant")->check(CLI::IsMember({"complex", "real"}));
    app->add_option("--convolution", f.convolution, "memory convolution")
        ->check(CLI::IsMember({"direct", "recursion"}));
    app->add_option("--workers", f.workers, "worker threads (0 = SMF_SIM_THREADS or all cores)");
    app->add_option("--stride", f.stride, "steps per output sample");
    app->add_option("--eta-pi", f.eta_pi, "pi * eta");
    app->add_option("--delta-c", f.delta_c, "Drude cutoff");
    app->add_option("--kbt", f.kbt, "temperature k_B T");
    app->add_option("-o,--output", f.output, "output directory");
}

void add_scheme_flag(CLI::App* app, RunFlags& f) {
    app->add_option("--scheme", f.scheme, "smf (plain exists for the tiny-bath checks only)")
        ->check(CLI::IsMember({"smf", "plain"}));
}

// The continuous-bath engine is mean-field centred by construction
void require_smf(const RunFlags& f) {
    if (f.scheme != "smf")
        throw ConfigError("scheme 'plain' is only available for the tiny-bath solvers; use check-exactness --scheme plain");
}

RunConfig build_config(const RunFlags& f) {
    json j;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(f.config + ": " + e.what());
        }
        if (!f.preset.empty()) j["preset"] = f.preset;
    } else if (!f.preset.empty()) {
        j["preset"] = f.preset;
    } else {
        j = json::object();
    }
    if (f.seed) j["master_seed"] = *f.seed;
    if (f.n_traj) j["n_traj"] = *f.n_traj;
    if (f.stride) j["output_stride"] = *f.stride;
    if (f.workers) j["workers"] = *f.workers;
    if (f.dt) j["integrator"]["dt"] = *f.dt;
    if (f.t_max) j["integrator"]["t_max"] = *f.t_max;
    if (f.variant) j["integrator"]["variant"] = *f.variant;
    if (f.convolution) j["integrator"]["convolution"] = *f.convolution;
    if (f.eta_pi) j["bath"]["eta"] = *f.eta_pi / std::numbers::pi;
    if (f.delta_c) j["bath"]["delta_c"] = *f.delta_c;
    if (f.kbt) j["bath"]["kT"] = *f.kbt;
    return from_json(j);
}

fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + p.string() + ": " + ec.message());
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json verdict(const std::string& test, double statistic, double threshold, bool pass) {
    return {{"test", test}, {"statistic", statistic}, {"threshold", threshold}, {"pass", pass}};
}

std::string command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

int finish_run(const RunConfig& cfg, const EnsembleResult& r, const fs::path& dir, const std::string& stem,
               const std::string& cmd) {
    fs::path csv = dir / (stem + ".csv");
    write_csv(csv.string(), r);
    write_json(dir / (stem + ".json"), sidecar(cfg, r, cmd));
    std::cerr << "wrote " << csv.string() << " (" << r.n_traj << " trajectories, " << r.n_divergent
              << " divergent)\n";
    if (r.failed) {
        std::cerr << "run failed: " << r.message << "\n";
        return 2;
    }
    return 0;
}

std::string kernel_csv(const KernelTable& t) {
    std::ostringstream os;
    os << "tau,D,D1\n";
    char buf[96];
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t.dtau * static_cast<double>(k), t.d_values[k],
                      t.d1_values[k]);
        os << buf;
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic mean-field simulation of the spin-boson model"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);
    const std::string cmd = command_line(argc, argv);

    RunFlags sim_f;
    auto* sim = app.add_subcommand("simulate", "density-matrix ensemble run");
    add_run_flags(sim, sim_f);
    add_scheme_flag(sim, sim_f);

    RunFlags sse_f;
    auto* sse = app.add_subcommand("sse", "pure-state pair ensemble run");
    add_run_flags(sse, sse_f);
    add_scheme_flag(sse, sse_f);

    RunFlags ker_f;
    std::optional<double> tau_max, dtau;
    auto* ker = app.add_subcommand("kernels", "dump D and D1 as CSV (tau,D,D1)");
    ker->add_option("--preset", ker_f.preset)->check(CLI::IsMember(preset_names()));
    ker->add_option("--eta-pi", ker_f.eta_pi);
    ker->add_option("--delta-c", ker_f.delta_c);
    ker->add_option("--kbt", ker_f.kbt);
    ker->add_option("--tau-max", tau_max, "last tabulated lag (default: the run t_max)");
    ker->add_option("--dtau", dtau, "table spacing (default: the run dt)");
    std::string ker_out;
    ker->add_option("-o,--output", ker_out, "output file (default stdout)");

    RunFlags tcl_f;
    auto* tcl = app.add_subcommand("tcl2", "second-order time-convolutionless master equation");
    add_run_flags(tcl, tcl_f);

    RunFlags orc_f;
    std::string orc_kind = "dephasing";
    std::string orc_against;
    double orc_tol = 3.0;
    auto* orc = app.add_subcommand("oracle", "exact references: pure dephasing or tiny bath");
    add_run_flags(orc, orc_f);
    orc->add_option("--kind", orc_kind)->check(CLI::IsMember({"dephasing", "tiny"}));
    orc->add_option("--against", orc_against, "stochastic CSV to compare with")->check(CLI::ExistingFile);
    orc->add_option("--tol", orc_tol, "max z-score for --against");

    std::string ex_scheme = "both";
    std::size_t ex_samples = 1000000, ex_lambda_samples = 100000, ex_traj = 10000;
    double ex_tmax = 5.0, ex_dt = 0.01;
    std::uint64_t ex_seed = 1;
    unsigned ex_workers = 0;
    std::string ex_out = ".";
    bool ex_skip_tiny = false;
    auto* ex = app.add_subcommand("check-exactness", "one-step mean, lambda_stat growth and tiny-bath ensemble checks");
    ex->add_option("--scheme", ex_scheme)->check(CLI::IsMember({"smf", "plain", "both"}));
    ex->add_option("--samples", ex_samples, "one-step samples");
    ex->add_option("--lambda-samples", ex_lambda_samples, "lambda_stat samples");
    ex->add_option("--n-traj", ex_traj, "tiny-bath trajectories");
    ex->add_option("--t-max", ex_tmax);
    ex->add_option("--dt", ex_dt, "tiny-bath ensemble step");
    ex->add_option("--seed", ex_seed);
    ex->add_option("--workers", ex_workers);
    ex->add_option("-o,--output", ex_out);
    ex->add_flag("--skip-tiny", ex_skip_tiny, "skip the tiny-bath ensemble run");

    double mo_omega = 1.0, mo_kappa = 0.5, mo_kbt = 0.5, mo_dt = 1e-3;
    std::size_t mo_steps = 1000;
    std::uint64_t mo_seed = 1;
    std::string mo_variant = "complex", mo_out;
    auto* mo = app.add_subcommand("check-moments", "single-mode second-moment constancy");
    mo->add_option("--omega", mo_omega);
    mo->add_option("--kappa", mo_kappa);
    mo->add_option("--kbt", mo_kbt);
    mo->add_option("--dt", mo_dt);
    mo->add_option("--steps", mo_steps);
    mo->add_option("--seed", mo_seed);
    mo->add_option("--variant", mo_variant)->check(CLI::IsMember({"complex", "real"}));
    mo->add_option("-o,--output", mo_out, "verdict file (default stdout)");

    std::string cmp_a, cmp_b, cmp_out, cmp_metric = "deviation";
    double cmp_tol = 0.05, cmp_tlimit = 1e300;
    std::string cmp_obs = "xyz";
    auto* cmp = app.add_subcommand("compare", "compare two result CSVs");
    cmp->add_option("a", cmp_a)->required()->check(CLI::ExistingFile);
    cmp->add_option("b", cmp_b)->required()->check(CLI::ExistingFile);
    cmp->add_option("--tol", cmp_tol, "threshold on the metric");
    cmp->add_option("--metric", cmp_metric)->check(CLI::IsMember({"deviation", "z"}));
    cmp->add_option("--t-limit", cmp_tlimit, "ignore times beyond this");
    cmp->add_option("--observables", cmp_obs, "subset of xyz");
    cmp->add_option("-o,--output", cmp_out, "verdict file (default stdout)");

    std::string gold_out = "goldens";
    auto* gold = app.add_subcommand("make-goldens", "regenerate deterministic oracle outputs");
    gold->add_option("-o,--output", gold_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim || *sse) {
            const RunFlags& f = *sim ? sim_f : sse_f;
            require_smf(f);
            RunConfig cfg = build_config(f);
            auto dir = ensure_dir(f.output);
            auto r = run_ensemble(cfg, *sim ? Method::Density : Method::SSE);
            return finish_run(cfg, r, dir, *sim ? cfg.name : cfg.name + "_sse", cmd);
        }
        if (*ker) {
            RunConfig cfg = build_config(ker_f);
            double step = dtau.value_or(cfg.integrator.dt);
            auto table = build_kernel_table(cfg.bath, tau_max.value_or(cfg.integrator.t_max), step);
            std::string text = kernel_csv(table);
            if (ker_out.empty())
                std::cout << text;
            else
                write_text(ker_out, text);
            return 0;
        }
        if (*tcl) {
            RunConfig cfg = build_config(tcl_f);
            auto dir = ensure_dir(tcl_f.output);
            auto r = tcl2_run(cfg.params, cfg.bath, cfg.integrator.dt, cfg.integrator.t_max, cfg.output_stride);
            return finish_run(cfg, r, dir, cfg.name + "_tcl2", cmd);
        }
        if (*orc) {
            RunConfig cfg = build_config(orc_f);
            auto dir = ensure_dir(orc_f.output);
            EnsembleResult r;
            json v;
            std::string stem;
            if (orc_kind == "dephasing") {
                const auto& p = cfg.params;
                if (p.epsilon != 0.0 || p.initial_bloch != std::array<double, 3>{0.0, 0.0, 1.0})
                    throw ConfigError("dephasing oracle needs epsilon = 0 and initial Bloch (0, 0, 1)");
                std::size_t n_out = cfg.integrator.steps() / cfg.output_stride + 1;
                r.n_traj = 1;
                r.master_seed = cfg.master_seed;
                r.times.resize(n_out);
                for (auto& m : r.mean) m.assign(n_out, cplx{});
                for (auto& e : r.err) e.assign(n_out, 0.0);
                double max_abs = 0.0;
                for (std::size_t k = 0; k < n_out; ++k) {
                    double t = static_cast<double>(k * cfg.output_stride) * cfg.integrator.dt;
                    double env = std::exp(-dephasing_exponent(cfg.bath, t));
                    r.times[k] = t;
                    r.mean[1][k] = -std::sin(2.0 * p.omega0 * t) * env;
                    r.mean[2][k] = std::cos(2.0 * p.omega0 * t) * env;
                    max_abs = std::max(max_abs, env);
                }
                stem = cfg.name + "_oracle";
                v = verdict("dephasing_envelope_bounded", max_abs, 1.0, std::isfinite(max_abs) && max_abs <= 1.0);
            } else {
                auto spec = default_tiny_bath();
                auto sys = default_tiny_system();
                auto rep = tiny_bath_exact(spec, sys, ex_dt, ex_tmax, static_cast<std::size_t>(std::llround(0.25 / ex_dt)));
                r = rep.series;
                stem = "tiny_exact";
                v = verdict("tiny_exact_purity", rep.max_purity_dev, 1e-8, rep.max_purity_dev <= 1e-8);
            }
            fs::path csv = dir / (stem + ".csv");
            write_csv(csv.string(), r);
            json side = sidecar(cfg, r, cmd);
            side["oracle"] = orc_kind;
            write_json(dir / (stem + ".json"), side);
            if (!orc_against.empty()) {
                auto other = read_csv(orc_against);
                auto rep = compare_runs(other, r);
                v = verdict("oracle_vs_" + fs::path(orc_against).filename().string(), rep.max_z, orc_tol,
                            rep.max_z <= orc_tol);
                v["max_deviation"] = rep.max_deviation;
                v["t_at_max"] = rep.t_at_max;
            }
            write_json(dir / (stem + "_verdict.json"), v);
            std::cout << v.dump() << "\n";
            return v["pass"].get<bool>() ? 0 : 1;
        }
        if (*ex) {
            auto dir = ensure_dir(ex_out);
            json verdicts = json::array();
            bool all = true;
            auto push = [&](json v) {
                all = all && v["pass"].get<bool>();
                std::cout << v.dump() << "\n";
                verdicts.push_back(std::move(v));
            };
            // one-step: single mode in a coherent state, pure system state
            const TinyBathSpec one = one_step_bath();
            const SpinBosonParams sys = check_system();
            const double step_dt = check_dt;
            std::optional<OneStepReport> smf_rep, plain_rep;
            if (ex_scheme != "plain") {
                smf_rep = one_step_mean_check(one, sys, step_dt, ex_samples, Scheme::SMF, ex_seed, ex_workers);
                push(verdict("one_step_smf", smf_rep->max_ratio, 1.0, smf_rep->pass));
            }
            if (ex_scheme != "smf") {
                plain_rep = one_step_mean_check(one, sys, step_dt, ex_samples, Scheme::Plain, ex_seed, ex_workers);
                push(verdict("one_step_plain", plain_rep->max_ratio, 1.0, plain_rep->pass));
            }
            if (smf_rep && plain_rep) {
                double worst = (smf_rep->stderr_elem.array() - plain_rep->stderr_elem.array()).maxCoeff();
                push(verdict("one_step_stderr_smf_le_plain", worst, 0.0, worst <= 0.0));
            }
            const TinyBathSpec lam = lambda_stat_bath();
            for (Scheme sc : {Scheme::SMF, Scheme::Plain}) {
                if ((sc == Scheme::SMF && ex_scheme == "plain") || (sc == Scheme::Plain && ex_scheme == "smf"))
                    continue;
                auto rep = lambda_stat_growth_check(lam, sys, step_dt, ex_lambda_samples, sc, ex_seed, ex_workers);
                push(verdict(sc == Scheme::SMF ? "lambda_stat_smf" : "lambda_stat_plain", std::abs(rep.z), 5.0,
                             std::abs(rep.z) <= 5.0));
            }
            if (!ex_skip_tiny) {
                auto spec = default_tiny_bath();
                auto tsys = default_tiny_system();
                auto stride = static_cast<std::size_t>(std::llround(0.25 / ex_dt));
                auto exact = tiny_bath_exact(spec, tsys, ex_dt, ex_tmax, stride);
                TinyRunConfig tc;
                tc.dt = ex_dt;
                tc.t_max = ex_tmax;
                tc.n_traj = ex_traj;
                tc.output_stride = stride;
                tc.seed = ex_seed;
                tc.workers = ex_workers;
                write_csv((dir / "tiny_exact.csv").string(), exact.series);
                std::vector<std::pair<std::string, std::vector<double>>> lam_cols;
                std::vector<double> times;
                for (Scheme sc : {Scheme::SMF, Scheme::Plain}) {
                    std::string name = sc == Scheme::SMF ? "smf" : "plain";
                    if (ex_scheme != "both" && ex_scheme != name) continue;
                    tc.scheme = sc;
                    std::vector<double> lam;
                    auto run = tiny_bath_smf(spec, tsys, tc, &lam);
                    write_csv((dir / ("tiny_" + name + ".csv")).string(), run);
                    auto rep = compare_runs(run, exact.series, {false, false, true});
                    push(verdict("tiny_bath_" + name + "_vs_exact", rep.max_z, 3.0, rep.max_z <= 3.0 && !run.failed));
                    times = run.times;
                    lam_cols.emplace_back(name, std::move(lam));
                }
                std::ostringstream os;
                os << "t";
                for (const auto& [name, col] : lam_cols) os << ",lambda_stat_" << name;
                os << "\n";
                char buf[64];
                for (std::size_t k = 0; k < times.size(); ++k) {
                    std::snprintf(buf, sizeof buf, "%.17g", times[k]);
                    os << buf;
                    for (const auto& [name, col] : lam_cols) {
                        std::snprintf(buf, sizeof buf, ",%.17g", col[k]);
                        os << buf;
                    }
                    os << "\n";
                }
                write_text(dir / "tiny_lambda_stat.csv", os.str());
            }
            write_json(dir / "check_exactness.json", verdicts);
            return all ? 0 : 1;
        }
        if (*mo) {
            auto rep = single_mode_moment_check(mo_omega, mo_kappa, mo_kbt, mo_dt, mo_steps, mo_seed,
                                                parse_variant(mo_variant));
            double stat = std::max({rep.max_s_mm, rep.max_s_pp, rep.max_s_mp_dev});
            json v = verdict("moment_constancy", stat, 1e-6, rep.pass);
            v["nbar"] = rep.nbar;
            if (mo_out.empty())
                std::cout << v.dump(2) << "\n";
            else
                write_json(mo_out, v);
            return rep.pass ? 0 : 1;
        }
        if (*cmp) {
            auto a = read_csv(cmp_a);
            auto b = read_csv(cmp_b);
            std::array<bool, 3> use{cmp_obs.find('x') != std::string::npos, cmp_obs.find('y') != std::string::npos,
                                    cmp_obs.find('z') != std::string::npos};
            auto rep = compare_runs(a, b, use, cmp_tlimit);
            double stat = cmp_metric == "z" ? rep.max_z : rep.max_deviation;
            json v = verdict("compare_" + cmp_metric, stat, cmp_tol, stat <= cmp_tol);
            v["max_deviation"] = rep.max_deviation;
            v["max_z"] = rep.max_z;
            v["t_at_max"] = rep.t_at_max;
            if (cmp_out.empty())
                std::cout << v.dump(2) << "\n";
            else
                write_json(cmp_out, v);
            return v["pass"].get<bool>() ? 0 : 1;
        }
        if (*gold) {
            auto dir = ensure_dir(gold_out);
            // kernel table at the weak-coupling preset
            RunConfig weak = preset("fig1_weak");
            write_text(dir / "kernels_fig1_weak.csv", kernel_csv(build_kernel_table(weak.bath, 10.0, 0.01)));
            // pure-dephasing curve on the weak preset grid, coarse output
            {
                RunFlags f;
                f.preset = "fig1_weak";
                RunConfig c = build_config(f);
                c.output_stride = 835;
                std::size_t n_out = c.integrator.steps() / c.output_stride + 1;
                std::ostringstream os;
                os << "t,sz\n";
                char buf[64];
                for (std::size_t k = 0; k < n_out; ++k) {
                    double t = static_cast<double>(k * c.output_stride) * c.integrator.dt;
                    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, pure_dephasing_sz(c.bath, c.params.omega0, t));
                    os << buf;
                }
                write_text(dir / "dephasing_fig1_weak.csv", os.str());
            }
            auto spec = default_tiny_bath();
            auto exact = tiny_bath_exact(spec, default_tiny_system(), 0.01, 5.0, 25);
            write_csv((dir / "tiny_exact.csv").string(), exact.series);
            for (const char* name : {"fig2_tr", "fig2_br"}) {
                RunConfig c = preset(name);
                write_csv((dir / (std::string(name) + "_tcl2.csv")).string(),
                          tcl2_run(c.params, c.bath, c.integrator.dt, c.integrator.t_max, c.output_stride));
            }
            // short stochastic run pinned bit for bit
            RunConfig small = preset("fig1_weak");
            small.n_traj = 256;
            small.integrator.t_max = 0.6;
            small.master_seed = 2024;
            write_csv((dir / "fig1_weak_short.csv").string(), run_ensemble(small));
            std::cerr << "goldens written to " << dir.string() << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
