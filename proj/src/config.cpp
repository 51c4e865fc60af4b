#include "smf/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace smf {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + where + key + "' has the wrong type");
    }
}

RunConfig fig1(double pi_eta, double dt, std::size_t steps, std::size_t stride, const std::string& name) {
    RunConfig c;
    c.name = name;
    c.params.omega0 = 1.0;
    c.params.epsilon = 0.0;
    c.params.initial_bloch = {0.0, 0.0, 1.0};
    c.bath = make_bath(pi_eta / std::numbers::pi, 5.0, 2.0);
    c.integrator.dt = dt;
    c.integrator.t_max = static_cast<double>(steps) * dt;
    c.n_traj = 20000;
    c.output_stride = stride;
    return c;
}

RunConfig fig2(double pi_eta, double kT, const std::string& name) {
    RunConfig c;
    c.name = name;
    c.params.omega0 = 0.0;
    c.params.epsilon = 1.0;
    c.params.initial_bloch = {1.0, 0.0, 0.0};
    c.bath = make_bath(pi_eta / std::numbers::pi, 10.0, kT);
    c.integrator.dt = 1e-3;
    c.integrator.t_max = 5.0;
    c.n_traj = 40000;
    c.output_stride = 50;
    return c;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"fig1_weak", "fig1_strong", "fig2_tl", "fig2_tr", "fig2_bl", "fig2_br"};
}

RunConfig preset(const std::string& name) {
    if (name == "fig1_weak") return fig1(0.2, 1.2e-3, 8350, 50, name);
    if (name == "fig1_strong") return fig1(4.0, 2.2e-4, 45500, 250, name);
    if (name == "fig2_tl") return fig2(0.2, 4.0, name);
    if (name == "fig2_tr") return fig2(0.2, 20.0, name);
    if (name == "fig2_bl") return fig2(1.0, 4.0, name);
    if (name == "fig2_br") return fig2(1.0, 20.0, name);
    throw ConfigError("unknown preset '" + name + "'");
}

std::string to_string(NoiseVariant v) { return v == NoiseVariant::ComplexExact ? "complex" : "real"; }
std::string to_string(ConvolutionMode m) { return m == ConvolutionMode::Direct ? "direct" : "recursion"; }
std::string to_string(DeterministicOrder o) { return o == DeterministicOrder::Euler ? "euler" : "heun"; }

NoiseVariant parse_variant(const std::string& s) {
    if (s == "complex") return NoiseVariant::ComplexExact;
    if (s == "real") return NoiseVariant::RealApproximate;
    throw ConfigError("variant must be 'complex' or 'real', got '" + s + "'");
}

ConvolutionMode parse_convolution(const std::string& s) {
    if (s == "direct") return ConvolutionMode::Direct;
    if (s == "recursion") return ConvolutionMode::ExponentialRecursion;
    throw ConfigError("convolution must be 'direct' or 'recursion', got '" + s + "'");
}

DeterministicOrder parse_order(const std::string& s) {
    if (s == "euler") return DeterministicOrder::Euler;
    if (s == "heun") return DeterministicOrder::Heun;
    throw ConfigError("order must be 'euler' or 'heun', got '" + s + "'");
}

json to_json(const RunConfig& c) {
    json j;
    j["name"] = c.name;
    j["system"] = {{"omega0", c.params.omega0},
                   {"epsilon", c.params.epsilon},
                   {"initial_bloch", c.params.initial_bloch}};
    json b = {{"kind", "ohmic_drude"},
              {"eta", c.bath.spectral.eta},
              {"delta_c", c.bath.spectral.delta_c},
              {"kT", c.bath.kT},
              {"omega_max", c.bath.omega_max},
              {"quadrature_points", c.bath.quadrature_points}};
    if (c.bath.matsubara_terms == 0)
        b["matsubara_terms"] = "auto";
    else
        b["matsubara_terms"] = c.bath.matsubara_terms;
    j["bath"] = b;
    const auto& ic = c.integrator;
    j["integrator"] = {{"dt", ic.dt},
                       {"t_max", ic.t_max},
                       {"convolution", to_string(ic.convolution)},
                       {"variant", to_string(ic.variant)},
                       {"order", to_string(ic.order)},
                       {"noise_substeps", ic.noise_substeps},
                       {"suppress_noise", ic.suppress_noise},
                       {"divergence_bound", ic.divergence_bound}};
    j["n_traj"] = c.n_traj;
    j["master_seed"] = c.master_seed;
    j["output_stride"] = c.output_stride;
    j["workers"] = c.workers;
    j["divergence_threshold"] = c.divergence_threshold;
    return j;
}

RunConfig from_json(const json& j) {
    reject_unknown(j,
                   {"preset", "name", "system", "bath", "integrator", "n_traj", "master_seed", "output_stride",
                    "workers", "divergence_threshold"},
                   "");
    RunConfig c;
    if (j.contains("preset")) {
        if (!j["preset"].is_string()) throw ConfigError("key 'preset' must be a string");
        c = preset(j["preset"].get<std::string>());
    }
    read(j, "name", c.name, "");
    if (j.contains("system")) {
        const json& s = j["system"];
        reject_unknown(s, {"omega0", "epsilon", "initial_bloch"}, "system.");
        read(s, "omega0", c.params.omega0, "system.");
        read(s, "epsilon", c.params.epsilon, "system.");
        read(s, "initial_bloch", c.params.initial_bloch, "system.");
    }
    if (j.contains("bath")) {
        const json& b = j["bath"];
        reject_unknown(b, {"kind", "eta", "delta_c", "kT", "matsubara_terms", "omega_max", "quadrature_points"},
                       "bath.");
        if (b.contains("kind") && b["kind"] != "ohmic_drude")
            throw ConfigError("bath.kind must be 'ohmic_drude'");
        bool had_omega_max = b.contains("omega_max");
        read(b, "eta", c.bath.spectral.eta, "bath.");
        read(b, "delta_c", c.bath.spectral.delta_c, "bath.");
        read(b, "kT", c.bath.kT, "bath.");
        if (b.contains("matsubara_terms")) {
            const json& m = b["matsubara_terms"];
            if (m.is_string() && m == "auto")
                c.bath.matsubara_terms = 0;
            else if (m.is_number_integer() && m.get<int>() >= 1)
                c.bath.matsubara_terms = m.get<int>();
            else
                throw ConfigError("bath.matsubara_terms must be 'auto' or an integer >= 1");
        }
        read(b, "omega_max", c.bath.omega_max, "bath.");
        if (!had_omega_max) c.bath.omega_max = 50.0 * c.bath.spectral.delta_c;
        read(b, "quadrature_points", c.bath.quadrature_points, "bath.");
    }
    if (j.contains("integrator")) {
        const json& i = j["integrator"];
        reject_unknown(i,
                       {"dt", "t_max", "convolution", "variant", "order", "noise_substeps", "suppress_noise",
                        "divergence_bound"},
                       "integrator.");
        auto& ic = c.integrator;
        read(i, "dt", ic.dt, "integrator.");
        read(i, "t_max", ic.t_max, "integrator.");
        std::string s;
        if (i.contains("convolution")) {
            read(i, "convolution", s, "integrator.");
            ic.convolution = parse_convolution(s);
        }
        if (i.contains("variant")) {
            read(i, "variant", s, "integrator.");
            ic.variant = parse_variant(s);
        }
        if (i.contains("order")) {
            read(i, "order", s, "integrator.");
            ic.order = parse_order(s);
        }
        read(i, "noise_substeps", ic.noise_substeps, "integrator.");
        read(i, "suppress_noise", ic.suppress_noise, "integrator.");
        read(i, "divergence_bound", ic.divergence_bound, "integrator.");
    }
    if (j.contains("n_traj")) {
        if (!j["n_traj"].is_number_integer() || j["n_traj"].get<long long>() < 1)
            throw ConfigError("n_traj must be an integer >= 1");
        c.n_traj = j["n_traj"].get<std::size_t>();
    }
    read(j, "master_seed", c.master_seed, "");
    if (j.contains("output_stride")) {
        if (!j["output_stride"].is_number_integer() || j["output_stride"].get<long long>() < 1)
            throw ConfigError("output_stride must be an integer >= 1");
        c.output_stride = j["output_stride"].get<std::size_t>();
    }
    if (j.contains("workers")) {
        if (!j["workers"].is_number_integer() || j["workers"].get<long long>() < 0)
            throw ConfigError("workers must be an integer >= 0");
        c.workers = j["workers"].get<unsigned>();
    }
    read(j, "divergence_threshold", c.divergence_threshold, "");
    validate(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
}

json sidecar(const RunConfig& c, const EnsembleResult& r, const std::string& command) {
    json j;
    j["version"] = version_string;
    j["command"] = command;
    j["units"] = "hbar = 1; times in 1/omega0 (fig1) or 1/epsilon (fig2)";
    j["config"] = to_json(c);
    j["n_traj"] = r.n_traj;
    j["n_divergent"] = r.n_divergent;
    j["master_seed"] = r.master_seed;
    j["failed"] = r.failed;
    if (!r.message.empty()) j["message"] = r.message;
    return j;
}

}  // namespace smf
