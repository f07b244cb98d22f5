#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "kdvstar/errors.hpp"
#include "kdvstar/io.hpp"
#include "kdvstar/parallel.hpp"

using namespace kdvstar;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<double> T, dt, amplitude, nodes_per_unit;
    std::optional<std::string> initial, scheme;
    bool emit_plot = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "JSON run configuration")->required();
    sub->add_option("-o,--out", c.out, "output directory");
    sub->add_option("--T", c.T, "time horizon");
    sub->add_option("--dt", c.dt, "time step (must divide T)");
    sub->add_option("--nodes-per-unit", c.nodes_per_unit, "mesh nodes per unit length");
    sub->add_option("--initial", c.initial, "initial-data profile");
    sub->add_option("--amplitude", c.amplitude, "rescale the initial state to this L2 norm");
    sub->add_option("--scheme", c.scheme, "linear or nonlinear");
}

RunConfig resolve(const Common& c) {
    RunConfig rc = load_run_config(c.config);
    if (c.T) rc.T = *c.T;
    if (c.dt) rc.dt = *c.dt;
    if (c.nodes_per_unit) {
        rc.nodes_per_unit = *c.nodes_per_unit;
        rc.M.clear();
    }
    if (c.initial) rc.initial = *c.initial;
    if (c.amplitude) rc.amplitude = *c.amplitude;
    if (c.scheme) {
        if (*c.scheme == "linear") rc.scheme = Scheme::Linear;
        else if (*c.scheme == "nonlinear") rc.scheme = Scheme::Nonlinear;
        else throw ConfigError("--scheme must be linear or nonlinear");
    }
    if (!(rc.T > 0.0)) throw ConfigError("T must be positive");
    return rc;
}

Vec initial_from(const RunConfig& rc, const Grid& grid) {
    Vec u = initial_state(rc.initial, rc.net, grid, rc.seed);
    if (rc.amplitude > 0.0) {
        const double n = grid.norm(u);
        if (n == 0.0) throw ConfigError("cannot rescale a zero initial state");
        u *= rc.amplitude / n;
    }
    return u;
}

void write_manifest(const std::string& dir, const std::string& cmd, const RunConfig& rc, const Grid& grid, double dt,
                    const std::vector<std::string>& outputs) {
    json m = {{"subcommand", cmd}, {"version", kVersion}, {"config", run_config_to_json(rc)},
              {"resolved", {{"dt", dt}, {"M", grid.M}, {"h", grid.h}, {"ndof", grid.ndof}}},
              {"trace_derivative", "second-order one-sided differences"},
              {"outputs", outputs}};
    write_json((fs::path(dir) / "manifest.json").string(), m);
}

std::optional<DampingProfile> damping_from(const RunConfig& rc, const Grid& grid) {
    if (!rc.damping.enabled) return std::nullopt;
    const auto edges = rc.damping.edges.empty() ? default_damped_edges(rc.net) : rc.damping.edges;
    return make_damping(rc.net, grid, edges, rc.damping.c, rc.damping.supports);
}

std::string path_in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

int cmd_simulate(const Common& c, bool write_states, const std::string& export_op) {
    const RunConfig rc = resolve(c);
    const Grid grid = make_grid(rc);
    const double dt = resolved_dt(rc, grid);
    const Vec u0 = initial_from(rc, grid);
    const auto damping = damping_from(rc, grid);
    SimOptions opt;
    opt.scheme = rc.scheme;
    opt.T = rc.T;
    opt.dt = dt;
    opt.stride = rc.stride;
    opt.startup_steps = rc.startup_steps;
    if (damping) opt.damping = &*damping;
    fs::create_directories(c.out);
    const Trajectory tr = simulate(rc.net, grid, u0, opt);

    std::vector<std::string> outputs{"trajectory.csv", "summary.json"};
    write_trajectory_csv(tr, path_in(c.out, "trajectory.csv"));
    double max_rise = 0.0;
    for (size_t n = 1; n < tr.E.size(); ++n) max_rise = std::max(max_rise, tr.E[n] - tr.E[n - 1]);
    int picard_max = 0;
    for (int p : tr.picard_iterations) picard_max = std::max(picard_max, p);
    json summary = {{"manifest", "manifest.json"},
                    {"steps", tr.steps()},
                    {"dt", tr.dt},
                    {"E_initial", tr.E.front()},
                    {"E_final", tr.E.back()},
                    {"max_energy_increase", max_rise},
                    {"energy_nonincreasing", max_rise <= 1e-12 * tr.E.front()},
                    {"picard_max_iterations", picard_max},
                    {"multipliers", to_json(verify_multiplier_identities(tr, rc.net, grid))}};
    write_json(path_in(c.out, "summary.json"), summary);
    if (c.emit_plot) {
        write_text(path_in(c.out, "energy.svg"), energy_svg(tr.t, tr.E, "log E vs t"));
        outputs.push_back("energy.svg");
    }
    if (write_states) {
        write_state_csv(grid, tr.final_state, path_in(c.out, "final_state.csv"));
        write_json(path_in(c.out, "layout.json"), grid_layout(grid));
        outputs.push_back("final_state.csv");
        outputs.push_back("layout.json");
    }
    if (!export_op.empty()) {
        write_matrix_market(assemble_linear_operator(grid, rc.net).A, export_op);
    }
    write_manifest(c.out, "simulate", rc, grid, dt, outputs);
    std::printf("steps %d  E(0) %.6e  E(T) %.6e  max increase %.3e\n", tr.steps(), tr.E.front(), tr.E.back(), max_rise);
    return 0;
}

int cmd_critical(const std::vector<double>& lengths, double tol, int kmax, const std::string& out) {
    if (lengths.empty()) throw ConfigError("at least one length required");
    NetworkConfig cfg = build_config(static_cast<int>(lengths.size()), lengths, static_cast<double>(lengths.size()));
    cfg.crit_tol = tol;
    cfg.k_max = kmax;
    const json j = to_json(classify_network(cfg, tol, kmax), cfg);
    if (!out.empty()) write_json(out, j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_decay(const Common& c, std::optional<int> seeds) {
    RunConfig rc = resolve(c);
    if (seeds) rc.seeds = *seeds;
    const Grid grid = make_grid(rc);
    const double dt = resolved_dt(rc, grid);
    std::vector<Vec> init;
    if (rc.initial == "random") init = random_seeds(rc.net, grid, rc.seeds, rc.seed, rc.amplitude > 0 ? rc.amplitude : 1.0);
    else init.push_back(initial_from(rc, grid));
    const auto damping = damping_from(rc, grid);
    SimOptions opt;
    opt.scheme = rc.scheme;
    opt.T = rc.T;
    opt.dt = dt;
    opt.stride = rc.stride;
    opt.startup_steps = rc.startup_steps;
    if (damping) opt.damping = &*damping;
    const CampaignResult res = decay_campaign(rc.net, grid, opt, init, thread_count_from_env());
    json fits = json::array();
    for (size_t i = 0; i < res.fits.size(); ++i) {
        json f = to_json(res.fits[i]);
        f["seed_index"] = i;
        fits.push_back(f);
    }
    fs::create_directories(c.out);
    write_json(path_in(c.out, "campaign.json"),
               {{"manifest", "manifest.json"},
                {"fits", fits},
                {"mu_min", res.mu_min},
                {"mu_median", res.mu_median},
                {"verdict", res.decay_observed ? "exponential decay observed" : "no exponential decay"},
                {"rng_seed", rc.seed},
                {"config", run_config_to_json(rc)}});
    write_manifest(c.out, "decay", rc, grid, dt, {"campaign.json"});
    std::printf("%s: mu_min %.6g  mu_median %.6g\n", res.decay_observed ? "exponential decay observed" : "no exponential decay",
                res.mu_min, res.mu_median);
    return 0;
}

int cmd_control(const Common& c, std::optional<double> eps, bool sweep, bool verify, bool nonlinear, int outer) {
    RunConfig rc = resolve(c);
    if (eps) rc.epsilon = *eps;
    const Grid grid = make_grid(rc);
    const double dt = resolved_dt(rc, grid);
    const Vec u0 = initial_from(rc, grid);
    const Vec uT = initial_state(rc.target, rc.net, grid, rc.seed + 1);
    const ControlProblem prob(rc.net, grid, rc.T, dt, rc.startup_steps);
    fs::create_directories(c.out);
    std::vector<std::string> outputs{"controls.csv", "hum.json"};

    HumSolution sol;
    json report;
    if (sweep) {
        const auto sols = hum_epsilon_sweep(prob, u0, uT, rc.epsilons, rc.cg_tol, rc.cg_maxit);
        std::string table = "epsilon,miss,relative_miss,iterations,converged\n";
        json rows = json::array();
        std::printf("%-10s %-14s %-14s %s\n", "epsilon", "miss", "relative", "iterations");
        for (const auto& s : sols) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d,%d\n", s.epsilon, s.miss, s.relative_miss, s.iterations,
                          s.converged ? 1 : 0);
            table += buf;
            rows.push_back(to_json(s, false));
            std::printf("%-10.1e %-14.6e %-14.6e %d\n", s.epsilon, s.miss, s.relative_miss, s.iterations);
        }
        write_text(path_in(c.out, "sweep.csv"), table);
        outputs.push_back("sweep.csv");
        bool monotone = true;
        for (size_t i = 1; i < sols.size(); ++i) monotone = monotone && sols[i].miss <= sols[i - 1].miss;
        report["sweep"] = rows;
        report["sweep_monotone"] = monotone;
        sol = sols.back();
    } else if (nonlinear) {
        HumOptions opt{rc.epsilon, rc.cg_tol, rc.cg_maxit, nullptr};
        const auto res = hum_solve_nonlinear(prob, u0, uT, opt, outer);
        sol = res.last;
        report["nonlinear_misses"] = res.misses;
    } else {
        sol = hum_solve(prob, u0, uT, HumOptions{rc.epsilon, rc.cg_tol, rc.cg_maxit, nullptr});
    }
    report.update(to_json(sol));
    report["manifest"] = "manifest.json";
    report["u0_norm"] = grid.norm(u0);
    report["scheme"] = nonlinear ? "nonlinear" : "linear";
    if (!sol.converged)
        std::fprintf(stderr, "warning: CG stopped after %d iterations at relative residual %.3e; "
                             "a larger epsilon or a finer mesh may help\n",
                     sol.iterations, sol.residuals.empty() ? 0.0 : sol.residuals.back());
    const std::string csv = path_in(c.out, "controls.csv");
    write_controls_csv(sol.controls, csv);
    if (verify) {
        const ControlSignals back = read_controls_csv(csv);
        Vec uTv;
        if (nonlinear) {
            ForcingData f;
            f.boundary = back.values;
            SimOptions so;
            so.scheme = Scheme::Nonlinear;
            so.T = rc.T;
            so.dt = dt;
            so.startup_steps = rc.startup_steps;
            so.forcing = &f;
            uTv = simulate(rc.net, grid, u0, so).final_state;
        } else {
            uTv = prob.forward(u0, &back);
        }
        const double vmiss = grid.norm(uTv - uT);
        report["verified_miss"] = vmiss;
        const bool agree = std::abs(vmiss - sol.miss) <= 1e-9 * std::max(1.0, sol.miss);
        report["verified"] = agree;
        std::printf("verified miss %.6e (%s)\n", vmiss, agree ? "matches" : "MISMATCH");
        if (!agree) {
            write_json(path_in(c.out, "hum.json"), report);
            throw SolverError("verification forward solve disagrees with the reported miss");
        }
    }
    write_json(path_in(c.out, "hum.json"), report);
    write_manifest(c.out, "control", rc, grid, dt, outputs);
    std::printf("miss %.6e  relative %.6e  iterations %d\n", sol.miss, sol.relative_miss, sol.iterations);
    return 0;
}

int cmd_observability(const Common& c, std::optional<std::string> kind, std::optional<int> n_eigs,
                      std::optional<double> k_cut, const std::string& test_vector) {
    RunConfig rc = resolve(c);
    if (kind) rc.gramian = *kind;
    if (n_eigs) rc.n_eigs = *n_eigs;
    if (k_cut) rc.k_cut = *k_cut;
    if (rc.gramian != "control" && rc.gramian != "stabilization") throw ConfigError("--kind must be control or stabilization");
    const GramianKind gk = rc.gramian == "control" ? GramianKind::Control : GramianKind::Stabilization;
    const Grid grid = make_grid(rc);
    const double dt = resolved_dt(rc, grid);
    const ControlProblem prob(rc.net, grid, rc.T, dt, rc.obs_startup_steps);
    std::vector<Vec> extra;
    if (!test_vector.empty()) extra.push_back(initial_state(test_vector, rc.net, grid, rc.seed));
    const SpectrumResult sp = observability_spectrum(prob, gk, rc.n_eigs, rc.k_cut, extra);
    json j = {{"manifest", "manifest.json"},
              {"gramian", rc.gramian},
              {"eigenvalues", sp.eigenvalues},
              {"subspace_dim", sp.subspace_dim},
              {"lanczos_steps", sp.lanczos_steps},
              {"cutoff_wavenumber", sp.cutoff_wavenumber},
              {"observability_constant", sp.eigenvalues.empty() || sp.eigenvalues.front() <= 0 ? json(nullptr) : json(1.0 / sp.eigenvalues.front())},
              {"regime", regime_name(classify_network(rc.net).regime)}};
    if (!test_vector.empty()) {
        j["test_vector"] = test_vector;
        j["rayleigh_quotient"] = rayleigh_quotient(prob, gk, extra.front());
    }
    fs::create_directories(c.out);
    write_json(path_in(c.out, "spectrum.json"), j);
    write_manifest(c.out, "observability", rc, grid, dt, {"spectrum.json"});
    std::printf("%s Gramian, subspace %d: lambda_min %.6e\n", rc.gramian.c_str(), sp.subspace_dim,
                sp.eigenvalues.empty() ? 0.0 : sp.eigenvalues.front());
    return 0;
}

int cmd_modes(const std::string& config, std::vector<double> lengths, double alpha, double npu, const std::string& out) {
    RunConfig rc;
    if (!config.empty()) rc = load_run_config(config);
    else {
        if (lengths.empty()) throw ConfigError("modes needs --config or lengths");
        rc.net = build_config(static_cast<int>(lengths.size()), lengths,
                              alpha > 0 ? alpha : static_cast<double>(lengths.size()));
        rc.nodes_per_unit = npu;
    }
    const auto rep = classify_network(rc.net);
    json j = {{"criticality", to_json(rep, rc.net)}};
    json modes = json::array();
    for (int e : rep.critical_edges()) {
        json m = to_json(rosier_mode(rc.net.lengths[e], *rep.witness[e], rc.net.crit_tol));
        m["edge"] = e + 1;
        modes.push_back(m);
    }
    j["edge_modes"] = modes;
    fs::create_directories(out);
    if (rep.count >= 2) {
        const Grid grid = make_grid(rc);
        const CriticalMode cm = build_critical_mode(rc.net, grid);
        const SpatialOperator op = assemble_linear_operator(grid, rc.net);
        j["network_mode"] = {{"edges", {cm.edge1 + 1, cm.edge2 + 1}},
                             {"lambda", {cm.lambda.real(), cm.lambda.imag()}},
                             {"energy", energy(grid, cm.y)},
                             {"junction_residual", cm.junction_residual},
                             {"stationarity_residual", (op.A * cm.y).lpNorm<Eigen::Infinity>()},
                             {"profile", "mode.csv"}};
        write_state_csv(grid, cm.y, path_in(out, "mode.csv"));
    }
    write_json(path_in(out, "modes.json"), j);
    std::printf("%d critical edge(s), regime %s\n", rep.count, regime_name(rep.regime));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KdV on star-shaped networks: simulation, decay, critical lengths and boundary control"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common sim_c, dec_c, ctl_c, obs_c;
    bool states = false;
    std::string export_op;
    auto* sim = app.add_subcommand("simulate", "advance the network equation and write traces");
    add_common(sim, sim_c);
    sim->add_flag("--emit-plot", sim_c.emit_plot, "write energy.svg");
    sim->add_flag("--states", states, "write the final state and DOF layout");
    sim->add_option("--export-operator", export_op, "write A_h in Matrix Market format");

    std::vector<double> lengths;
    double tol = 1e-9;
    int kmax = 50;
    std::string crit_out;
    auto* crit = app.add_subcommand("critical", "classify edge lengths against the critical set");
    crit->add_option("lengths", lengths, "edge lengths")->required();
    crit->add_option("--tol", tol, "matching tolerance");
    crit->add_option("--kmax", kmax, "largest k, l searched");
    crit->add_option("-o,--out", crit_out, "also write the report to this file");

    std::optional<int> seeds;
    auto* dec = app.add_subcommand("decay", "fit exponential decay rates over seeds");
    add_common(dec, dec_c);
    dec->add_option("--seeds", seeds, "number of random seeds");

    std::optional<double> eps;
    bool sweep = false, verify = false, nonlinear = false;
    int outer = 10;
    auto* ctl = app.add_subcommand("control", "exact boundary control by HUM");
    add_common(ctl, ctl_c);
    ctl->add_option("--epsilon", eps, "Tikhonov regularization");
    ctl->add_flag("--epsilon-sweep", sweep, "solve for each epsilon in the config list");
    ctl->add_flag("--verify", verify, "rerun the forward solve from the written controls");
    ctl->add_flag("--nonlinear", nonlinear, "experimental fixed-point control of the nonlinear equation");
    ctl->add_option("--outer", outer, "fixed-point iterations for --nonlinear");

    std::optional<std::string> kind;
    std::optional<int> n_eigs;
    std::optional<double> k_cut;
    std::string test_vector;
    auto* obs = app.add_subcommand("observability", "smallest Gramian eigenvalues");
    add_common(obs, obs_c);
    obs->add_option("--kind", kind, "control or stabilization");
    obs->add_option("--n-eigs", n_eigs, "number of eigenvalues");
    obs->add_option("--k-cut", k_cut, "wavenumber cutoff of the test subspace");
    obs->add_option("--test-vector", test_vector, "profile whose Rayleigh quotient is reported");

    std::string modes_cfg, modes_out = ".";
    std::vector<double> modes_len;
    double modes_alpha = 0.0, modes_npu = 64.0;
    auto* mod = app.add_subcommand("modes", "Rosier modes and the network critical mode");
    mod->add_option("-c,--config", modes_cfg, "JSON run configuration");
    mod->add_option("lengths", modes_len, "edge lengths (without --config)");
    mod->add_option("--alpha", modes_alpha, "coupling (default N)");
    mod->add_option("--nodes-per-unit", modes_npu, "mesh density for the network mode");
    mod->add_option("-o,--out", modes_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*sim) return cmd_simulate(sim_c, states, export_op);
        if (*crit) return cmd_critical(lengths, tol, kmax, crit_out);
        if (*dec) return cmd_decay(dec_c, seeds);
        if (*ctl) return cmd_control(ctl_c, eps, sweep, verify, nonlinear, outer);
        if (*obs) return cmd_observability(obs_c, kind, n_eigs, k_cut, test_vector);
        if (*mod) return cmd_modes(modes_cfg, modes_len, modes_alpha, modes_npu, modes_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 3;
    } catch (const RegimeError& e) {
        std::fprintf(stderr, "regime error: %s\n", e.what());
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
    return 0;
}
