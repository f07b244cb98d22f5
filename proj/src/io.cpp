#include "kdvstar/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kdvstar/errors.hpp"

namespace kdvstar {

namespace {

template <class T>
T get_key(const json& obj, const char* key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + path + key + "': " + e.what());
    }
}

int line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + byte, '\n'));
}

const std::vector<std::string> kKnownTop = {"network", "grid",    "time",   "scheme",  "initial",
                                            "target",  "amplitude", "damping", "seed", "seeds",
                                            "control", "observability"};

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

double parse_number(const std::string& w, const std::string& spec) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(w, &pos);
        if (pos != w.size() || !std::isfinite(v)) throw std::invalid_argument(w);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("initial-data spec '" + spec + "': '" + w + "' is not a number");
    }
}

int parse_edge(const std::string& w, const std::string& spec, int n_edges) {
    const double v = parse_number(w, spec);
    const int e = static_cast<int>(v);
    if (e != v || e < 1 || e > n_edges)
        throw ConfigError("initial-data spec '" + spec + "': edge must be in 1.." + std::to_string(n_edges));
    return e - 1;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& item : j.items())
        if (std::find(kKnownTop.begin(), kKnownTop.end(), item.key()) == kKnownTop.end())
            throw ConfigError("config key '" + item.key() + "' is not recognised");

    RunConfig rc;
    if (!j.contains("network")) throw ConfigError("config key 'network' is required");
    const json& nw = j["network"];
    const auto lengths = get_key<std::vector<double>>(nw, "lengths", "network.", {});
    if (lengths.empty()) throw ConfigError("config key 'network.lengths' is required and nonempty");
    const int n = get_key<int>(nw, "n_edges", "network.", static_cast<int>(lengths.size()));
    const double alpha = get_key<double>(nw, "alpha", "network.", std::nan(""));
    if (std::isnan(alpha)) throw ConfigError("config key 'network.alpha' is required");
    rc.net = build_config(n, lengths, alpha);
    if (nw.contains("criticality")) {
        rc.net.crit_tol = get_key<double>(nw["criticality"], "tol", "network.criticality.", rc.net.crit_tol);
        rc.net.k_max = get_key<int>(nw["criticality"], "k_max", "network.criticality.", rc.net.k_max);
        if (!(rc.net.crit_tol > 0.0) || rc.net.k_max < 1)
            throw ConfigError("config key 'network.criticality': tol > 0 and k_max >= 1 required");
    }

    if (j.contains("grid")) {
        const json& g = j["grid"];
        rc.nodes_per_unit = get_key<double>(g, "nodes_per_unit", "grid.", rc.nodes_per_unit);
        if (g.contains("h")) rc.nodes_per_unit = 1.0 / get_key<double>(g, "h", "grid.", 1.0 / rc.nodes_per_unit);
        rc.M = get_key<std::vector<int>>(g, "M", "grid.", {});
        if (!(rc.nodes_per_unit > 0.0)) throw ConfigError("config key 'grid.nodes_per_unit' must be positive");
    }
    if (j.contains("time")) {
        const json& t = j["time"];
        rc.T = get_key<double>(t, "T", "time.", rc.T);
        rc.dt = get_key<double>(t, "dt", "time.", rc.dt);
        rc.stride = get_key<int>(t, "stride", "time.", rc.stride);
        rc.startup_steps = get_key<int>(t, "startup_steps", "time.", rc.startup_steps);
        if (!(rc.T > 0.0)) throw ConfigError("config key 'time.T' must be positive");
        if (rc.dt < 0.0) throw ConfigError("config key 'time.dt' must be nonnegative");
        if (rc.stride < 1) throw ConfigError("config key 'time.stride' must be >= 1");
        if (rc.startup_steps < 0) throw ConfigError("config key 'time.startup_steps' must be >= 0");
    }
    const auto scheme = get_key<std::string>(j, "scheme", "", "linear");
    if (scheme == "linear") rc.scheme = Scheme::Linear;
    else if (scheme == "nonlinear") rc.scheme = Scheme::Nonlinear;
    else throw ConfigError("config key 'scheme': expected 'linear' or 'nonlinear', got '" + scheme + "'");
    rc.initial = get_key<std::string>(j, "initial", "", rc.initial);
    rc.target = get_key<std::string>(j, "target", "", rc.target);
    rc.amplitude = get_key<double>(j, "amplitude", "", rc.amplitude);
    rc.seed = get_key<std::uint64_t>(j, "seed", "", rc.seed);
    rc.seeds = get_key<int>(j, "seeds", "", rc.seeds);
    if (rc.seeds < 1) throw ConfigError("config key 'seeds' must be >= 1");

    if (j.contains("damping")) {
        const json& d = j["damping"];
        rc.damping.enabled = get_key<bool>(d, "enabled", "damping.", true);
        for (int e : get_key<std::vector<int>>(d, "edges", "damping.", {})) {
            if (e < 1 || e > rc.net.n_edges) throw ConfigError("config key 'damping.edges': edge out of range");
            rc.damping.edges.push_back(e - 1);
        }
        rc.damping.c = get_key<double>(d, "c", "damping.", rc.damping.c);
        for (const auto& s : get_key<std::vector<std::vector<double>>>(d, "supports", "damping.", {})) {
            if (s.size() != 2) throw ConfigError("config key 'damping.supports': intervals are [lo, hi]");
            rc.damping.supports.emplace_back(s[0], s[1]);
        }
    }
    if (j.contains("control")) {
        const json& c = j["control"];
        rc.epsilon = get_key<double>(c, "epsilon", "control.", rc.epsilon);
        rc.cg_tol = get_key<double>(c, "cg_tol", "control.", rc.cg_tol);
        rc.cg_maxit = get_key<int>(c, "cg_maxit", "control.", rc.cg_maxit);
        rc.epsilons = get_key<std::vector<double>>(c, "epsilons", "control.", rc.epsilons);
        if (rc.epsilon < 0.0) throw ConfigError("config key 'control.epsilon' must be nonnegative");
    }
    if (j.contains("observability")) {
        const json& o = j["observability"];
        rc.gramian = get_key<std::string>(o, "gramian", "observability.", rc.gramian);
        rc.n_eigs = get_key<int>(o, "n_eigs", "observability.", rc.n_eigs);
        rc.k_cut = get_key<double>(o, "k_cut", "observability.", rc.k_cut);
        rc.obs_startup_steps = get_key<int>(o, "startup_steps", "observability.", rc.obs_startup_steps);
        if (rc.obs_startup_steps < 0) throw ConfigError("config key 'observability.startup_steps' must be >= 0");
        if (rc.gramian != "control" && rc.gramian != "stabilization")
            throw ConfigError("config key 'observability.gramian': expected 'control' or 'stabilization'");
    }
    return rc;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text(path)); }

json run_config_to_json(const RunConfig& rc) {
    json j;
    j["network"] = {{"n_edges", rc.net.n_edges},
                    {"lengths", rc.net.lengths},
                    {"alpha", rc.net.alpha},
                    {"criticality", {{"tol", rc.net.crit_tol}, {"k_max", rc.net.k_max}}}};
    j["grid"] = rc.M.empty() ? json{{"nodes_per_unit", rc.nodes_per_unit}} : json{{"M", rc.M}};
    j["time"] = {{"T", rc.T}, {"dt", rc.dt}, {"stride", rc.stride}, {"startup_steps", rc.startup_steps}};
    j["scheme"] = rc.scheme == Scheme::Linear ? "linear" : "nonlinear";
    j["initial"] = rc.initial;
    j["target"] = rc.target;
    j["amplitude"] = rc.amplitude;
    std::vector<int> edges;
    for (int e : rc.damping.edges) edges.push_back(e + 1);
    json supports = json::array();
    for (const auto& [lo, hi] : rc.damping.supports) supports.push_back({lo, hi});
    j["damping"] = {{"enabled", rc.damping.enabled}, {"edges", edges}, {"c", rc.damping.c}, {"supports", supports}};
    j["seed"] = rc.seed;
    j["seeds"] = rc.seeds;
    j["control"] = {{"epsilon", rc.epsilon}, {"cg_tol", rc.cg_tol}, {"cg_maxit", rc.cg_maxit}, {"epsilons", rc.epsilons}};
    j["observability"] = {{"gramian", rc.gramian}, {"n_eigs", rc.n_eigs}, {"k_cut", rc.k_cut},
                          {"startup_steps", rc.obs_startup_steps}};
    return j;
}

Grid make_grid(const RunConfig& rc) {
    return rc.M.empty() ? build_grid(rc.net, rc.nodes_per_unit) : build_grid(rc.net, rc.M);
}

double resolved_dt(const RunConfig& rc, const Grid& grid) {
    if (rc.dt > 0.0) return rc.dt;
    // largest dt <= min h dividing T
    const double h = grid.min_h();
    return rc.T / std::ceil(rc.T / h - 1e-9);
}

Vec initial_state(const std::string& spec, const NetworkConfig& cfg, const Grid& grid, std::uint64_t seed) {
    const auto w = split_words(spec);
    if (w.empty()) throw ConfigError("empty initial-data spec");
    const std::string& kind = w[0];
    auto arity = [&](std::size_t lo, std::size_t hi) {
        if (w.size() < lo || w.size() > hi)
            throw ConfigError("initial-data spec '" + spec + "': wrong number of arguments");
    };
    if (kind == "zero") {
        arity(1, 1);
        return Vec::Zero(grid.ndof);
    }
    if (kind == "sine") {
        arity(2, 3);
        const double kv = parse_number(w[1], spec);
        const int k = static_cast<int>(kv);
        if (k != kv || k < 1 || k > 64) throw ConfigError("initial-data spec '" + spec + "': k must be in 1..64");
        std::vector<std::vector<double>> c(grid.n_edges, std::vector<double>(k, 0.0));
        if (w.size() == 3) c[parse_edge(w[2], spec, grid.n_edges)][k - 1] = 1.0;
        else
            for (auto& e : c) e[k - 1] = 1.0;
        return sine_profile(cfg, grid, c);
    }
    if (kind == "bump") {
        arity(4, 5);
        const double c = parse_number(w[1], spec), width = parse_number(w[2], spec), amp = parse_number(w[3], spec);
        const int edge = w.size() == 5 ? parse_edge(w[4], spec, grid.n_edges) : 0;
        const double l = grid.lengths[edge];
        if (!(width > 0.0) || c - width / 2 <= 0.0 || c + width / 2 >= l)
            throw ConfigError("initial-data spec '" + spec + "': bump support must lie inside the edge");
        Vec u = Vec::Zero(grid.ndof);
        for (int i = 1; i < grid.M[edge]; ++i) {
            const double s = (grid.x(edge, i) - c) / width;
            if (std::abs(s) < 0.5) u(grid.index(edge, i)) = amp * std::pow(std::cos(std::numbers::pi * s), 4);
        }
        return u;
    }
    if (kind == "random") {
        arity(1, 1);
        return random_seeds(cfg, grid, 1, seed).front();
    }
    if (kind == "critical-mode") {
        arity(1, 1);
        return build_critical_mode(cfg, grid).y;
    }
    if (kind == "file") {
        arity(2, 2);
        return read_state_values(w[1], grid);
    }
    throw ConfigError("initial-data spec '" + spec + "': unknown profile '" + kind +
                      "' (zero, sine, bump, random, critical-mode, file)");
}

json to_json(const CriticalityReport& rep, const NetworkConfig& cfg) {
    json edges = json::array();
    for (int j = 0; j < cfg.n_edges; ++j) {
        json e = {{"edge", j + 1}, {"length", cfg.lengths[j]}, {"is_critical", static_cast<bool>(rep.is_critical[j])}};
        if (rep.witness[j]) {
            e["witness"] = {rep.witness[j]->first, rep.witness[j]->second};
            e["critical_length"] = critical_length(rep.witness[j]->first, rep.witness[j]->second);
        } else {
            e["witness"] = nullptr;
        }
        edges.push_back(e);
    }
    std::vector<int> reduced;
    for (int e : rep.reduced_critical_edges()) reduced.push_back(e + 1);
    return {{"edges", edges},
            {"count", rep.count},
            {"regime", regime_name(rep.regime)},
            {"reduced_critical_edges", reduced},
            {"tol", cfg.crit_tol},
            {"k_max", cfg.k_max}};
}

json to_json(const DecayFit& f) {
    return {{"mu", f.mu}, {"C", f.C}, {"R2", f.R2}, {"window", {f.t_a, f.t_b}}, {"samples", f.samples},
            {"no_decay", f.no_decay}};
}

json to_json(const MultiplierReport& r) {
    return {{"energy_identity_residual", r.energy_identity_residual},
            {"trace_u0_ratio", r.trace_u0_ratio},
            {"trace_dx_ratio", r.trace_dx_ratio},
            {"h1_slack", r.h1_slack},
            {"h1_ratio", r.h1_ratio},
            {"initial_bound_slack", r.initial_bound_slack},
            {"initial_bound_ratio", r.initial_bound_ratio}};
}

json to_json(const HumSolution& s, bool with_residuals) {
    json j = {{"epsilon", s.epsilon},     {"miss", s.miss},           {"relative_miss", s.relative_miss},
              {"iterations", s.iterations}, {"converged", s.converged}, {"control_norm", std::sqrt(s.controls.inner(s.controls))}};
    if (with_residuals) j["residuals"] = s.residuals;
    return j;
}

json to_json(const RosierMode& m) {
    json roots = json::array(), coeffs = json::array();
    for (int i = 0; i < 3; ++i) {
        roots.push_back({m.roots[i].real(), m.roots[i].imag()});
        coeffs.push_back({m.coeffs[i].real(), m.coeffs[i].imag()});
    }
    return {{"length", m.length},
            {"witness", {m.kl.first, m.kl.second}},
            {"lambda", {m.lambda.real(), m.lambda.imag()}},
            {"closed_form", m.closed_form},
            {"residual", m.residual},
            {"roots", roots},
            {"coeffs", coeffs}};
}

void write_state_csv(const Grid& grid, const Vec& u, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot write " + path);
    std::fprintf(f, "edge,i,x,u\n");
    std::fprintf(f, "0,0,0,%.17g\n", u(0));
    for (int j = 0; j < grid.n_edges; ++j)
        for (int i = 1; i < grid.M[j]; ++i) std::fprintf(f, "%d,%d,%.17g,%.17g\n", j + 1, i, grid.x(j, i), u(grid.index(j, i)));
    std::fclose(f);
}

Vec read_state_values(const std::string& path, const Grid& grid) {
    std::istringstream in(read_text(path));
    std::string line;
    std::vector<double> vals;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto last = line.find_last_of(',');
        const std::string cell = last == std::string::npos ? line : line.substr(last + 1);
        try {
            vals.push_back(std::stod(cell));
        } catch (const std::exception&) {
            if (vals.empty()) continue;  // header
            throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    if (static_cast<int>(vals.size()) != grid.ndof)
        throw ConfigError(path + ": " + std::to_string(vals.size()) + " values, grid has " + std::to_string(grid.ndof));
    return Eigen::Map<Vec>(vals.data(), grid.ndof);
}

json grid_layout(const Grid& grid) {
    return {{"ndof", grid.ndof},
            {"junction_index", 0},
            {"M", grid.M},
            {"h", grid.h},
            {"offset", grid.offset},
            {"rule", "edge j node i (1 <= i < M_j) at offset[j] + i - 1; u(l_j) = 0 is not stored"}};
}

std::string energy_svg(const std::vector<double>& t, const std::vector<double>& E, const std::string& title) {
    const double W = 640, Hh = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < std::min(t.size(), E.size()); ++i)
        if (E[i] > 0.0 && std::isfinite(E[i])) pts.emplace_back(t[i], std::log10(E[i]));
    double t0 = t.empty() ? 0.0 : t.front(), t1 = t.empty() ? 1.0 : t.back();
    if (t1 <= t0) t1 = t0 + 1.0;
    double y0 = 0.0, y1 = 1.0;
    if (!pts.empty()) {
        y0 = y1 = pts.front().second;
        for (const auto& p : pts) {
            y0 = std::min(y0, p.second);
            y1 = std::max(y1, p.second);
        }
    }
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
    if (y1 <= y0) y1 = y0 + 1.0;
    auto X = [&](double v) { return ml + (v - t0) / (t1 - t0) * (W - ml - mr); };
    auto Y = [&](double v) { return Hh - mb - (v - y0) / (y1 - y0) * (Hh - mt - mb); };
    std::ostringstream s;
    char buf[128];
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << Hh - mb << "\" x2=\"" << W - mr << "\" y2=\"" << Hh - mb << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << Hh - mb << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double tv = t0 + k * (t1 - t0) / 4;
        std::snprintf(buf, sizeof buf, "%.3g", tv);
        s << "<text x=\"" << X(tv) << "\" y=\"" << Hh - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << buf << "</text>\n";
    }
    const int ny = static_cast<int>(y1 - y0);
    const int ystep = std::max(1, ny / 6);
    for (int k = 0; k <= ny; k += ystep) {
        const double yv = y0 + k;
        s << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">1e" << static_cast<int>(yv) << "</text>\n";
    }
    s << "<text x=\"" << W / 2 << "\" y=\"" << Hh - 10 << "\" text-anchor=\"middle\" font-size=\"12\">t</text>\n";
    s << "<text x=\"16\" y=\"" << Hh / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << Hh / 2 << ")\">E</text>\n";
    s << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(p.first), Y(p.second));
        s << buf;
    }
    s << "\"/>\n</svg>\n";
    return s.str();
}

}  // namespace kdvstar
