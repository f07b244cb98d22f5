#include "kdvstar/integrator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "kdvstar/errors.hpp"

namespace kdvstar {

SpMat h_adjoint(const Grid& grid, const SpMat& A) {
    SpMat At = A.transpose();
    SpMat out = grid.weights.cwiseInverse().asDiagonal() * At * grid.weights.asDiagonal();
    out.makeCompressed();
    return out;
}

namespace {

SpMat identity(int n) {
    SpMat I(n, n);
    I.setIdentity();
    return I;
}

void factor(Eigen::SparseLU<SpMat>& lu, const SpMat& m, const char* what) {
    lu.analyzePattern(m);
    lu.factorize(m);
    if (lu.info() != Eigen::Success)
        throw SolverError(std::string("factorization of the ") + what + " matrix failed: " +
                          lu.lastErrorMessage());
}

}  // namespace

Propagator::Propagator(const SpMat& A, double dt, int startup_steps)
    : A_(A), dt_(dt), startup_(startup_steps) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const SpMat I = identity(static_cast<int>(A.rows()));
    R_ = I + 0.5 * dt * A;
    SpMat C = I - 0.5 * dt * A;
    // a backward Euler half step uses the same matrix I - dt/2 A
    factor(cn_, C, "Crank-Nicolson");
}

Vec Propagator::solve_cn(const Vec& rhs) const {
    Vec x = cn_.solve(rhs);
    if (cn_.info() != Eigen::Success) throw SolverError("Crank-Nicolson solve failed");
    return x;
}

Vec Propagator::solve_be(const Vec& rhs) const {
    return solve_cn(rhs);
}

Vec Propagator::apply_explicit(const Vec& u) const { return R_ * u; }

Vec Propagator::step(int n, const Vec& u, const Vec& F0, const Vec& F1) const {
    if (is_startup(n)) {
        const Vec half = solve_be(u + 0.25 * dt_ * (F0 + F1));
        return solve_be(half + 0.5 * dt_ * F1);
    }
    return solve_cn(R_ * u + 0.5 * dt_ * (F0 + F1));
}

Vec Propagator::step(int n, const Vec& u) const {
    if (is_startup(n)) return solve_be(solve_be(u));
    return solve_cn(R_ * u);
}

int step_count(double T, double dt) {
    if (!(T > 0.0)) throw ConfigError("T must be positive");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const double k = T / dt;
    const long K = std::lround(k);
    if (K < 1 || std::abs(k - K) > 1e-8 * std::max(1.0, k))
        throw ConfigError("dt does not divide T");
    return static_cast<int>(K);
}

Vec step_linear(const Propagator& prop, const SpatialOperator& op, const Vec& u, int n,
                const Eigen::VectorXd* g0, const Eigen::VectorXd* g1) {
    if (!g0 && !g1) return prop.step(n, u);
    const Vec zero = Vec::Zero(op.B.cols());
    const Vec F0 = op.B * (g0 ? *g0 : zero);
    const Vec F1 = op.B * (g1 ? *g1 : zero);
    return prop.step(n, u, F0, F1);
}

namespace {

// Solves (I - theta dt A) v = rhs - theta dt N(v) by Picard iteration on the
// nonlinearity evaluated at (1 - c) base + c v.
PicardResult picard(const Grid& grid, const Vec& rhs, const Vec& base, double c, double scale,
                    bool be, const Propagator& prop, double tol, int max_iter) {
    Vec v = base;
    for (int m = 1; m <= max_iter; ++m) {
        const Vec arg = (1.0 - c) * base + c * v;
        const Vec r = rhs - scale * nonlinear_term(grid, arg);
        Vec next = be ? prop.solve_be(r) : prop.solve_cn(r);
        const double diff = grid.norm(next - v);
        v = std::move(next);
        if (!std::isfinite(diff)) break;
        if (diff < tol) return {v, m};
    }
    throw SolverError("Picard iteration did not converge in " + std::to_string(max_iter) +
                      " iterations (dt or data too large)");
}

}  // namespace

PicardResult step_nonlinear(const Propagator& prop, const Grid& grid, const Vec& u, int n,
                            const Vec& F0, const Vec& F1, double tol, int max_iter) {
    const double dt = prop.dt();
    if (prop.is_startup(n)) {
        auto a = picard(grid, u + 0.25 * dt * (F0 + F1), u, 1.0, 0.5 * dt, true, prop, tol, max_iter);
        auto b = picard(grid, a.u + 0.5 * dt * F1, a.u, 1.0, 0.5 * dt, true, prop, tol, max_iter);
        return {b.u, std::max(a.iterations, b.iterations)};
    }
    return picard(grid, prop.apply_explicit(u) + 0.5 * dt * (F0 + F1), u, 0.5, dt, false, prop, tol,
                  max_iter);
}

double energy(const Grid& grid, const Vec& u) { return 0.5 * grid.inner(u, u); }

double dissipation_rate(const Grid& grid, const NetworkConfig& cfg, const Vec& u) {
    double r = -cfg.margin() * u(0) * u(0);
    for (int j = 0; j < grid.n_edges; ++j) {
        const double d = dx_at_junction(grid, u, j);
        r -= 0.5 * d * d;
    }
    return r;
}

namespace {

void record(Trajectory& tr, const Grid& grid, const Vec& u, double t) {
    tr.t.push_back(t);
    tr.E.push_back(energy(grid, u));
    tr.u0.push_back(u(0));
    double flux = 0.0;
    for (int j = 0; j < grid.n_edges; ++j) {
        const double d0 = dx_at_junction(grid, u, j);
        tr.dx0[j].push_back(d0);
        tr.dxL[j].push_back(dx_at_far_end(grid, u, j));
        flux += u(0) * d0;
    }
    tr.grad2.push_back(gradient_norm2(grid, u));
    tr.boundary_flux.push_back(flux);
}

Vec forcing_at(const ForcingData* f, const SpatialOperator& op, int n, int ndof) {
    Vec F = Vec::Zero(ndof);
    if (!f) return F;
    if (f->boundary.rows() > 0) F += op.B * f->boundary.row(n).transpose();
    if (!f->source.empty()) F += f->source[n];
    return F;
}

}  // namespace

Trajectory simulate(const NetworkConfig& cfg, const Grid& grid, const Vec& u0, const SimOptions& opt) {
    if (u0.size() != grid.ndof) throw ConfigError("initial state does not match the grid");
    if (!u0.allFinite()) throw ConfigError("initial state has non-finite entries");
    const double dt = opt.dt > 0.0 ? opt.dt : grid.min_h();
    const int K = step_count(opt.T, dt);
    if (opt.stride < 1) throw ConfigError("stride must be >= 1");
    if (opt.forcing) {
        const auto& f = *opt.forcing;
        if (f.boundary.rows() > 0 &&
            (f.boundary.rows() != K + 1 || f.boundary.cols() != grid.n_edges + 1))
            throw ConfigError("boundary forcing has the wrong shape");
        if (!f.source.empty() && static_cast<int>(f.source.size()) != K + 1)
            throw ConfigError("source forcing has the wrong number of samples");
    }

    SpatialOperator op = assemble_linear_operator(grid, cfg);
    SpMat A = op.A;
    if (opt.damping) {
        if (opt.damping->nodal.size() != grid.ndof) throw ConfigError("damping profile does not match the grid");
        A -= SpMat(opt.damping->nodal.asDiagonal());
    }
    Propagator prop(A, dt, std::min(opt.startup_steps, K));

    Trajectory tr;
    tr.dt = dt;
    tr.stride = opt.stride;
    tr.startup_steps = prop.startup_steps();
    tr.dx0.assign(grid.n_edges, {});
    tr.dxL.assign(grid.n_edges, {});
    Vec u = u0;
    record(tr, grid, u, 0.0);
    tr.states.push_back(u);
    tr.state_steps.push_back(0);
    Vec F0 = forcing_at(opt.forcing, op, 0, grid.ndof);
    for (int n = 0; n < K; ++n) {
        const Vec F1 = forcing_at(opt.forcing, op, n + 1, grid.ndof);
        if (opt.scheme == Scheme::Linear) {
            u = prop.step(n, u, F0, F1);
        } else {
            try {
                auto r = step_nonlinear(prop, grid, u, n, F0, F1, opt.picard_tol, opt.picard_max);
                u = std::move(r.u);
                tr.picard_iterations.push_back(r.iterations);
            } catch (const SolverError& e) {
                throw SolverError(std::string(e.what()) + " at step " + std::to_string(n + 1));
            }
        }
        if (!u.allFinite()) throw SolverError("non-finite state at step " + std::to_string(n + 1));
        record(tr, grid, u, (n + 1) * dt);
        if ((n + 1) % opt.stride == 0 || n + 1 == K) {
            tr.states.push_back(u);
            tr.state_steps.push_back(n + 1);
        }
        F0 = F1;
    }
    tr.final_state = u;
    return tr;
}

double time_integral(const std::vector<double>& f, double dt) {
    if (f.size() < 2) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * dt;
}

MultiplierReport verify_multiplier_identities(const Trajectory& traj, const NetworkConfig& cfg,
                                              const Grid& grid) {
    if (traj.t.size() < 2) throw ConfigError("trajectory has too few samples");
    (void)grid;
    const double dt = traj.dt;
    const double T = traj.t.back();
    const double norm0 = 2.0 * traj.E.front();
    const double m = cfg.margin();

    std::vector<double> u0sq, dxsq, rate, l2sq;
    for (size_t n = 0; n < traj.t.size(); ++n) {
        double d = 0.0;
        for (const auto& s : traj.dx0) d += s[n] * s[n];
        u0sq.push_back(traj.u0[n] * traj.u0[n]);
        dxsq.push_back(d);
        rate.push_back(-m * traj.u0[n] * traj.u0[n] - 0.5 * d);
        l2sq.push_back(2.0 * traj.E[n]);
    }
    const double I_u0 = time_integral(u0sq, dt);
    const double I_dx = time_integral(dxsq, dt);
    const double I_l2 = time_integral(l2sq, dt);
    const double I_grad = time_integral(traj.grad2, dt);
    const double I_flux = time_integral(traj.boundary_flux, dt);

    MultiplierReport r;
    if (norm0 == 0.0) return r;
    r.energy_identity_residual =
        std::abs(traj.E.back() - traj.E.front() - time_integral(rate, dt)) / traj.E.front();
    r.trace_u0_ratio = I_u0 / (norm0 / m);
    r.trace_dx_ratio = I_dx / norm0;
    const double h1_rhs = cfg.L / 3.0 * norm0 + I_l2 / 3.0 - 2.0 / 3.0 * I_flux;
    r.h1_slack = h1_rhs - I_grad;
    r.h1_ratio = I_grad / h1_rhs;
    const double init_rhs = I_l2 / T + 3.0 * m * I_u0 + I_dx;
    r.initial_bound_slack = init_rhs - norm0;
    r.initial_bound_ratio = norm0 / init_rhs;
    return r;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot write " + path);
    const int N = static_cast<int>(traj.dx0.size());
    std::fprintf(f, "t,E,u1_at_0");
    for (int j = 1; j <= N; ++j) std::fprintf(f, ",dxu_at_0_edge%d", j);
    for (int j = 1; j <= N; ++j) std::fprintf(f, ",dxu_at_L_edge%d", j);
    std::fprintf(f, "\n");
    for (size_t n = 0; n < traj.t.size(); ++n) {
        std::fprintf(f, "%.17g,%.17g,%.17g", traj.t[n], traj.E[n], traj.u0[n]);
        for (int j = 0; j < N; ++j) std::fprintf(f, ",%.17g", traj.dx0[j][n]);
        for (int j = 0; j < N; ++j) std::fprintf(f, ",%.17g", traj.dxL[j][n]);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

}  // namespace kdvstar
