// One line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "kdvstar/control.hpp"
#include "kdvstar/io.hpp"
#include "kdvstar/stability.hpp"

using namespace kdvstar;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::vector<double> kNonCritical{1.0, std::numbers::sqrt2, std::numbers::e};
const double kTwoPi = 2.0 * std::numbers::pi;

NetworkConfig noncritical() { return build_config(3, kNonCritical, 2.0); }
NetworkConfig critical() { return build_config(3, {kTwoPi, kTwoPi, 1.0}, 2.0); }

double dt_for(double T, double h) { return T / std::ceil(T / h - 1e-9); }

SimOptions sim_opts(Scheme s, double T, double dt, int stride = 1) {
    SimOptions o;
    o.scheme = s;
    o.T = T;
    o.dt = dt;
    o.stride = stride;
    return o;
}

double max_energy_rise(const Trajectory& tr) {
    double r = -1e300;
    for (size_t n = 1; n < tr.E.size(); ++n) r = std::max(r, (tr.E[n] - tr.E[n - 1]) / tr.E.front());
    return r;
}

// max over Crank-Nicolson steps of |dE/dt - rate(midpoint)|, relative to max |rate|
double rate_residual(const Trajectory& tr, const NetworkConfig& cfg, const Grid& g) {
    double worst = 0.0, scale = 0.0;
    for (size_t n = 0; n + 1 < tr.states.size(); ++n) {
        const Vec mid = 0.5 * (tr.states[n] + tr.states[n + 1]);
        const double rate = dissipation_rate(g, cfg, mid);
        scale = std::max(scale, std::abs(rate));
        if (static_cast<int>(n) < tr.startup_steps) continue;
        worst = std::max(worst, std::abs((tr.E[n + 1] - tr.E[n]) / tr.dt - rate));
    }
    return worst / scale;
}

struct LinearRun {
    NetworkConfig cfg;
    Grid grid;
    Trajectory tr;
};

LinearRun criterion_run(double res, double dt) {
    LinearRun r{noncritical(), {}, {}};
    r.grid = build_grid(r.cfg, res);
    const Vec u0 = random_seeds(r.cfg, r.grid, 1, 7).front();
    r.tr = simulate(r.cfg, r.grid, u0, sim_opts(Scheme::Linear, 2.0, dt));
    return r;
}

const LinearRun& base_run() {
    static const LinearRun r = criterion_run(64.0, 1.0 / 128);
    return r;
}

Outcome c1() {
    const auto& a = base_run();
    const auto b = criterion_run(128.0, 1.0 / 256);
    const double rise = max_energy_rise(a.tr);
    const double ra = rate_residual(a.tr, a.cfg, a.grid), rb = rate_residual(b.tr, b.cfg, b.grid);
    return {rise <= 1e-12 && rb <= 0.01,
            fmt("max dE/E0 %.2e (<= 1e-12); rate residual %.2e -> %.2e after refinement (<= 1e-2)", rise, ra, rb)};
}

Outcome c2() {
    const auto& a = base_run();
    const auto rep = verify_multiplier_identities(a.tr, a.cfg, a.grid);
    return {rep.trace_u0_ratio <= 1.05 && rep.trace_dx_ratio <= 1.05,
            fmt("int u(0)^2 / bound %.4f, sum int (u_x(0))^2 / bound %.4f (<= 1.05)", rep.trace_u0_ratio,
                rep.trace_dx_ratio)};
}

Outcome c3() {
    const auto& a = base_run();
    const auto rep = verify_multiplier_identities(a.tr, a.cfg, a.grid);
    return {rep.initial_bound_ratio <= 1.05, fmt("|u0|^2 / rhs %.4f (<= 1.05)", rep.initial_bound_ratio)};
}

Outcome c4() {
    const auto cfg = noncritical();
    std::vector<CampaignResult> runs;
    for (double res : {32.0, 64.0}) {
        const Grid g = build_grid(cfg, res);
        const auto seeds = random_seeds(cfg, g, 5, 11);
        runs.push_back(decay_campaign(cfg, g, sim_opts(Scheme::Linear, 30.0, 0.5 / res, 50), seeds));
    }
    double worst_r2 = 1.0, worst_shift = 0.0, mu_min = 1e300;
    for (size_t s = 0; s < 5; ++s) {
        for (const auto& r : runs) {
            worst_r2 = std::min(worst_r2, r.fits[s].R2);
            mu_min = std::min(mu_min, r.fits[s].mu);
        }
        worst_shift = std::max(worst_shift, std::abs(runs[1].fits[s].mu / runs[0].fits[s].mu - 1.0));
    }
    return {runs[0].decay_observed && runs[1].decay_observed && worst_shift <= 0.2,
            fmt("mu_min %.4f, median %.4f -> %.4f, min R2 %.6f, max mu shift under refinement %.2f%% (<= 20%%)", mu_min,
                runs[0].mu_median, runs[1].mu_median, worst_r2, 100 * worst_shift)};
}

struct CriticalRun {
    double h, drift, u0_max, dx_max;
};

CriticalRun critical_run(int m) {
    const auto cfg = critical();
    const Grid g = build_grid(cfg, std::vector<int>{m, m, static_cast<int>(std::lround(m / kTwoPi))});
    const Vec y = build_critical_mode(cfg, g).y;
    const double h = g.h[0];
    const auto tr = simulate(cfg, g, y, sim_opts(Scheme::Linear, 10.0, dt_for(10.0, h), 100));
    CriticalRun r{h, std::abs(tr.E.back() - tr.E.front()) / tr.E.front(), 0.0, 0.0};
    for (size_t n = 0; n < tr.t.size(); ++n) {
        r.u0_max = std::max(r.u0_max, std::abs(tr.u0[n]));
        for (const auto& d : tr.dx0) r.dx_max = std::max(r.dx_max, std::abs(d[n]));
    }
    return r;
}

Outcome c5() {
    const auto a = critical_run(256), b = critical_run(512);
    const double ta = std::max(a.u0_max, a.dx_max), tb = std::max(b.u0_max, b.dx_max);
    const double order = std::log2(ta / tb);
    return {a.drift <= 0.01 && b.drift <= 0.5 * a.drift && order >= 1.5,
            fmt("|dE|/E0 %.2e -> %.2e (<= 1%%, halving); junction traces %.2e -> %.2e, observed order %.2f (>= 1.5)",
                a.drift, b.drift, ta, tb, order)};
}

Outcome c6() {
    const auto cfg = critical();
    const Grid g = build_grid(cfg, std::vector<int>{256, 256, 41});
    const Vec y = build_critical_mode(cfg, g).y;
    const double T = 30.0, dt = dt_for(T, g.h[0]);
    const auto damping = make_damping(cfg, g, default_damped_edges(cfg), 1.0);
    auto opt = sim_opts(Scheme::Linear, T, dt, 1000);
    const auto free = simulate(cfg, g, y, opt);
    const DecayFit undamped = fit_decay(free.E, free.t);
    opt.damping = &damping;
    const auto tr = simulate(cfg, g, y, opt);
    const DecayFit damped = fit_decay(tr.E, tr.t);
    return {damped.mu > 0.0 && damped.R2 > 0.99 && damped.mu >= 10.0 * std::max(undamped.mu, 0.0),
            fmt("damped edge %d: mu %.4f R2 %.5f; undamped mu %.2e (ratio >= 10)", damping.damped_edges.front() + 1,
                damped.mu, damped.R2, undamped.mu)};
}

Outcome c7() {
    const auto cfg = noncritical();
    const Grid g = build_grid(cfg, 64.0);
    Vec u0 = random_seeds(cfg, g, 1, 13, 1e-2).front();
    const auto tr = simulate(cfg, g, u0, sim_opts(Scheme::Nonlinear, 10.0, 1.0 / 64, 100));
    int pmax = 0;
    for (int p : tr.picard_iterations) pmax = std::max(pmax, p);
    const double rise = max_energy_rise(tr);
    return {pmax <= 10 && rise <= 1e-12,
            fmt("max Picard iterations %d (<= 10), max dE/E0 %.2e (<= 1e-12), E(T)/E(0) %.3e", pmax, rise,
                tr.E.back() / tr.E.front())};
}

Outcome c8() {
    const auto cfg = noncritical();
    const Grid g = build_grid(cfg, 32.0);
    const ControlProblem prob(cfg, g, 2.0, 1.0 / 32);
    const auto vs = random_seeds(cfg, g, 140, 17);
    double sym = 0.0, dual = 0.0, psd = 1e300;
    for (int p = 0; p < 20; ++p) {
        const Vec& phi = vs[2 * p];
        const Vec& psi = vs[2 * p + 1];
        ControlSignals cphi, cpsi;
        const Vec Lphi = prob.apply_gramian(phi, &cphi), Lpsi = prob.apply_gramian(psi, &cpsi);
        const double a = g.inner(Lphi, psi), b = g.inner(Lpsi, phi);
        const double scale = std::sqrt(g.inner(Lphi, phi) * g.inner(Lpsi, psi));
        sym = std::max(sym, std::abs(a - b) / scale);
        dual = std::max(dual, std::abs(a - cphi.inner(cpsi)) / scale);
    }
    for (int k = 40; k < 140; ++k) {
        const Vec& v = vs[k];
        psd = std::min(psd, g.inner(prob.apply_gramian(v), v) / g.inner(v, v));
    }
    return {sym <= 0.01 && dual <= 0.01 && psd >= -1e-12,
            fmt("symmetry %.2e, duality %.2e (<= 1e-2); min <L v,v>/|v|^2 %.3e (>= -1e-12)", sym, dual, psd)};
}

Outcome c9() {
    const auto cfg = noncritical();
    const Grid g = build_grid(cfg, 32.0);
    const ControlProblem prob(cfg, g, 3.0, 1.0 / 32);
    const Vec u0 = initial_state("bump 1.4 0.8 1 3", cfg, g, 0);
    const Vec uT = Vec::Zero(g.ndof);
    const auto sweep = hum_epsilon_sweep(prob, u0, uT, {1e-2, 1e-4, 1e-6, 1e-8}, 1e-10, 200);
    bool mono = true;
    std::string misses;
    for (size_t i = 0; i < sweep.size(); ++i) {
        if (i > 0) mono = mono && sweep[i].miss <= sweep[i - 1].miss;
        misses += fmt("%s%.2e", i ? " " : "", sweep[i].relative_miss);
    }
    const double rel = sweep.back().relative_miss;
    return {rel <= 0.05 && mono,
            fmt("relative miss at eps=1e-8 %.3e (<= 5e-2) after %d CG iterations; sweep [%s] monotone %s", rel,
                sweep.back().iterations, misses.c_str(), mono ? "yes" : "no")};
}

Outcome c10() {
    const double T = 2.0, k_cut = 12.0;
    double rq[2], lmin[2];
    for (int r = 0; r < 2; ++r) {
        const int m = 256 << r;
        const double res = m / kTwoPi;
        const auto ccfg = critical();
        const Grid cg = build_grid(ccfg, std::vector<int>{m, m, static_cast<int>(std::lround(m / kTwoPi))});
        const double dt = dt_for(T, cg.h[0]);
        const ControlProblem cp(ccfg, cg, T, dt, 0);
        rq[r] = rayleigh_quotient(cp, GramianKind::Stabilization, build_critical_mode(ccfg, cg).y);
        const auto ncfg = noncritical();
        const Grid ng = build_grid(ncfg, res);
        const ControlProblem np(ncfg, ng, T, dt, 0);
        lmin[r] = observability_spectrum(np, GramianKind::Stabilization, 1, k_cut).eigenvalues.front();
    }
    const double ratio = lmin[0] / lmin[1];
    return {rq[0] <= 1e-3 * lmin[0] && rq[1] <= 1e-3 * lmin[1] && rq[1] < rq[0] && ratio >= 0.5 && ratio <= 2.0,
            fmt("critical-mode RQ %.2e -> %.2e; non-critical lambda_min %.4e -> %.4e (ratio %.3f in [0.5, 2]); "
                "RQ/lambda_min %.1e (<= 1e-3)",
                rq[0], rq[1], lmin[0], lmin[1], ratio, std::max(rq[0] / lmin[0], rq[1] / lmin[1]))};
}

Outcome c11() {
    Rng rng(23);
    const double tol = 1e-9;
    int disagreements = 0, critical_hits = 0;
    for (int s = 0; s < 1000; ++s) {
        double len;
        if (rng.uniform() < 0.0) {
            len = 50.0 * (rng.uniform() + 1.0);
            if (len <= 0.0) len = 100.0;
        } else {
            // near a critical value, inside or clearly outside the tolerance
            int k = 1 + static_cast<int>(4.0 * (rng.uniform() + 1.0));
            int l = k + static_cast<int>(4.0 * (rng.uniform() + 1.0));
            const double offsets[] = {0.0, 0.5e-9, -0.5e-9, 3e-9, -3e-9};
            const int pick = std::min(4, static_cast<int>(2.5 * (rng.uniform() + 1.0)));
            len = 2.0 * std::numbers::pi * std::sqrt((k * k + l * l + k * l) / 3.0) + offsets[pick];
        }
        bool brute = false;
        for (int k = 1; k <= 50 && !brute; ++k)
            for (int l = 1; l <= 50 && !brute; ++l)
                brute = std::abs(len - 2.0 * std::numbers::pi * std::sqrt((k * k + l * l + k * l) / 3.0)) <= tol;
        const bool fast = is_critical(len, tol, 50).has_value();
        disagreements += brute != fast;
        critical_hits += brute;
    }
    return {disagreements == 0, fmt("%d disagreements over 1000 lengths (%d critical)", disagreements, critical_hits)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"C1 discrete dissipation law", c1},      {"C2 trace estimates", c2},
        {"C3 multiplier inequality", c3},         {"C4 exponential decay, non-critical", c4},
        {"C5 critical-mode energy conservation", c5}, {"C6 damped rescue", c6},
        {"C7 nonlinear small-data decay", c7},    {"C8 Gramian structure", c8},
        {"C9 null controllability", c9},          {"C10 observability dichotomy", c10},
        {"C11 critical-length oracle", c11}};
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), sec);
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
