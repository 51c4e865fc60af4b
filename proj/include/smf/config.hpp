// JSON run configuration, scenario presets, provenance

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "smf/ensemble.hpp"

namespace smf {

inline constexpr const char* version_string = "smfsim 1.0.0";

std::vector<std::string> preset_names();

// fig1_weak, fig1_strong, fig2_tl, fig2_tr, fig2_bl, fig2_br
RunConfig preset(const std::string& name);

nlohmann::json to_json(const RunConfig& c);

// Strict: unknown keys are rejected. A "preset" key selects the starting point,
// remaining keys override it; without it the library defaults apply.
RunConfig from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);

std::string to_string(NoiseVariant v);
std::string to_string(ConvolutionMode m);
std::string to_string(DeterministicOrder o);
NoiseVariant parse_variant(const std::string& s);
ConvolutionMode parse_convolution(const std::string& s);
DeterministicOrder parse_order(const std::string& s);

// Sidecar: config echo plus result summary and version
nlohmann::json sidecar(const RunConfig& c, const EnsembleResult& r, const std::string& command);

}  // namespace smf
