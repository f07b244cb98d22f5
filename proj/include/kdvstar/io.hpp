#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kdvstar/control.hpp"
#include "kdvstar/stability.hpp"

namespace kdvstar {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.3.0";

struct DampingSpec {
    bool enabled = false;
    std::vector<int> edges;  // 0-based; empty means the default set
    double c = 1.0;
    std::vector<std::pair<double, double>> supports;
};

/// Everything a subcommand needs, resolved from JSON plus command-line overrides.
struct RunConfig {
    NetworkConfig net;
    double nodes_per_unit = 64.0;
    std::vector<int> M;  // overrides nodes_per_unit when set
    Scheme scheme = Scheme::Linear;
    double T = 2.0;
    double dt = 0.0;
    int stride = 10;
    int startup_steps = 2;
    std::string initial = "random";
    std::string target = "zero";
    double amplitude = 0.0;  // > 0: rescale the initial state to this discrete L2 norm
    DampingSpec damping;
    std::uint64_t seed = 20240607;
    int seeds = 5;
    double epsilon = 1e-8;
    double cg_tol = 1e-10;
    int cg_maxit = 200;
    std::vector<double> epsilons{1e-2, 1e-4, 1e-6, 1e-8};
    std::string gramian = "control";
    int n_eigs = 4;
    double k_cut = 12.0;
    int obs_startup_steps = 0;  // Gramian spectra use plain Crank-Nicolson
};

/// Throws ConfigError naming the key (and line, for syntax errors).
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
json run_config_to_json(const RunConfig& rc);

Grid make_grid(const RunConfig& rc);
double resolved_dt(const RunConfig& rc, const Grid& grid);

/// Profiles: zero | sine k [edge] | bump center width amp [edge] | random | critical-mode | file <path>.
/// Edge numbers are 1-based.
Vec initial_state(const std::string& spec, const NetworkConfig& cfg, const Grid& grid, std::uint64_t seed);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const json& j);

json to_json(const CriticalityReport& rep, const NetworkConfig& cfg);
json to_json(const DecayFit& fit);
json to_json(const MultiplierReport& rep);
json to_json(const HumSolution& sol, bool with_residuals = true);
json to_json(const RosierMode& mode);

/// Nodal values per line with (edge, i, x) columns; junction listed once as edge 0.
void write_state_csv(const Grid& grid, const Vec& u, const std::string& path);
Vec read_state_values(const std::string& path, const Grid& grid);
json grid_layout(const Grid& grid);

/// Polyline of log10 E against t with axes and tick labels.
std::string energy_svg(const std::vector<double>& t, const std::vector<double>& E, const std::string& title);

}  // namespace kdvstar
