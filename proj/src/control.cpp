#include "kdvstar/control.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kdvstar/errors.hpp"

namespace kdvstar {

double ControlSignals::inner(const ControlSignals& other) const {
    const int K = steps();
    double s = 0.0;
    for (int n = 0; n <= K; ++n) {
        const double w = (n == 0 || n == K) ? 0.5 * dt : dt;
        s += w * values.row(n).dot(other.values.row(n));
    }
    return s;
}

ControlProblem::ControlProblem(const NetworkConfig& cfg, const Grid& grid, double T, double dt,
                               int startup_steps)
    : cfg_(cfg),
      grid_(grid),
      dt_(dt),
      K_(step_count(T, dt)),
      op_(assemble_linear_operator(grid, cfg)),
      fwd_(op_.A, dt, std::min(startup_steps, K_)),
      adj_(h_adjoint(grid, op_.A), dt, std::min(startup_steps, K_)) {
    w_.assign(K_ + 1, dt);
    w_.front() = w_.back() = 0.5 * dt;
}

ControlSignals ControlProblem::zero_controls() const {
    ControlSignals c;
    c.dt = dt_;
    c.values = Eigen::MatrixXd::Zero(K_ + 1, grid_.n_edges + 1);
    return c;
}

Vec ControlProblem::forward(const Vec& u0, const ControlSignals* controls, const std::vector<Vec>* source,
                            std::vector<double>* energy_series) const {
    if (controls && controls->values.rows() != K_ + 1) throw ConfigError("control signal length does not match the time grid");
    if (source && static_cast<int>(source->size()) != K_ + 1) throw ConfigError("source length does not match the time grid");
    auto F = [&](int n) {
        Vec f = Vec::Zero(grid_.ndof);
        if (controls) f += op_.B * controls->values.row(n).transpose();
        if (source) f += (*source)[n];
        return f;
    };
    Vec u = u0;
    if (energy_series) energy_series->push_back(energy(grid_, u));
    Vec F0 = F(0);
    for (int n = 0; n < K_; ++n) {
        Vec F1 = F(n + 1);
        u = fwd_.step(n, u, F0, F1);
        if (energy_series) energy_series->push_back(energy(grid_, u));
        F0 = std::move(F1);
    }
    return u;
}

Eigen::VectorXd ControlProblem::observe_controls(const Vec& q) const {
    // B^T H q
    Eigen::VectorXd o(grid_.n_edges + 1);
    o(0) = q(0);
    for (int j = 0; j < grid_.n_edges; ++j) o(j + 1) = -q(grid_.index(j, grid_.M[j] - 1)) / grid_.h[j];
    return o;
}

AdjointTrajectory ControlProblem::solve_adjoint_backward(const Vec& phiT) const {
    AdjointTrajectory adj;
    const int N = grid_.n_edges;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K_ + 1, N + 1);
    std::vector<Vec> traj(K_ + 1);
    Vec psi = phiT;
    traj[K_] = psi;
    for (int n = K_ - 1; n >= 0; --n) {
        if (adj_.is_startup(n)) {
            const Vec q1 = adj_.solve_cn(psi);
            const Vec q2 = adj_.solve_cn(q1);
            const Eigen::VectorXd o1 = observe_controls(q1), o2 = observe_controls(q2);
            acc.row(n + 1) += (0.5 * dt_ * o1 + 0.25 * dt_ * o2).transpose();
            acc.row(n) += (0.25 * dt_ * o2).transpose();
            psi = q2;
        } else {
            const Vec q = adj_.solve_cn(psi);
            const Eigen::VectorXd o = observe_controls(q);
            acc.row(n + 1) += (0.5 * dt_ * o).transpose();
            acc.row(n) += (0.5 * dt_ * o).transpose();
            psi = 2.0 * q - psi;
        }
        traj[n] = psi;
    }
    adj.controls = zero_controls();
    for (int n = 0; n <= K_; ++n) adj.controls.values.row(n) = acc.row(n) / w_[n];
    adj.dxphiL.assign(N, std::vector<double>(K_ + 1));
    for (int n = 0; n <= K_; ++n) {
        adj.t.push_back(n * dt_);
        adj.E.push_back(energy(grid_, traj[n]));
        adj.phi0.push_back(adj.controls.values(n, 0));
        for (int j = 0; j < N; ++j) adj.dxphiL[j][n] = adj.controls.values(n, j + 1);
    }
    adj.phi_initial = traj[0];
    return adj;
}

Vec ControlProblem::apply_gramian(const Vec& phiT, ControlSignals* controls) const {
    const auto adj = solve_adjoint_backward(phiT);
    if (controls) *controls = adj.controls;
    return forward(Vec::Zero(grid_.ndof), &adj.controls);
}

Vec ControlProblem::observe_stabilization_adjoint(const Vec& u) const {
    // H^{-1} O^T W O u
    const double m = cfg_.margin();
    Vec z = Vec::Zero(grid_.ndof);
    z(0) += m * u(0);
    for (int j = 0; j < grid_.n_edges; ++j) {
        const double h = grid_.h[j];
        const double d = dx_at_junction(grid_, u, j);
        z(0) += -3.0 / (2.0 * h) * d;
        z(grid_.index(j, 1)) += 4.0 / (2.0 * h) * d;
        z(grid_.index(j, 2)) += -1.0 / (2.0 * h) * d;
    }
    return z.cwiseQuotient(grid_.weights);
}

Vec ControlProblem::apply_stabilization_gramian(const Vec& y) const {
    std::vector<Vec> z(K_ + 1);
    Vec u = y;
    z[0] = observe_stabilization_adjoint(u);
    for (int n = 0; n < K_; ++n) {
        u = fwd_.step(n, u);
        z[n + 1] = observe_stabilization_adjoint(u);
    }
    Vec acc = w_[K_] * z[K_];
    for (int n = K_ - 1; n >= 0; --n) acc = adj_.step(n, acc) + w_[n] * z[n];
    return acc;
}

double ControlProblem::stabilization_observation(const Vec& y) const {
    const double m = cfg_.margin();
    auto obs = [&](const Vec& u) {
        double s = m * u(0) * u(0);
        for (int j = 0; j < grid_.n_edges; ++j) {
            const double d = dx_at_junction(grid_, u, j);
            s += d * d;
        }
        return s;
    };
    Vec u = y;
    double total = w_[0] * obs(u);
    for (int n = 0; n < K_; ++n) {
        u = fwd_.step(n, u);
        total += w_[n + 1] * obs(u);
    }
    return total;
}

namespace {

void check_regime(const ControlProblem& prob) {
    const auto rep = classify_network(prob.config());
    if (rep.regime == Regime::Critical)
        throw RegimeError("exact control needs a non-critical network; regime is Critical (" +
                          std::to_string(rep.count) + " critical edges)");
}

}  // namespace

HumSolution hum_solve(const ControlProblem& prob, const Vec& u0, const Vec& uT, const HumOptions& opt) {
    check_regime(prob);
    const Grid& g = prob.grid();
    if (u0.size() != g.ndof || uT.size() != g.ndof) throw ConfigError("state size does not match the grid");
    if (opt.epsilon < 0.0) throw ConfigError("epsilon must be nonnegative");
    const Vec rhs = uT - prob.forward(u0, nullptr);
    const double rhs_norm = g.norm(rhs);

    HumSolution sol;
    sol.epsilon = opt.epsilon;
    Vec x = opt.warm_start ? *opt.warm_start : Vec::Zero(g.ndof);
    if (rhs_norm > 0.0) {
        Vec r = rhs - prob.apply_gramian(x) - opt.epsilon * x;
        Vec d = r;
        double rr = g.inner(r, r);
        Vec best = x;
        double best_res = std::sqrt(rr);
        sol.residuals.push_back(best_res / rhs_norm);
        int it = 0;
        while (it < opt.cg_maxit && std::sqrt(rr) > opt.cg_tol * rhs_norm) {
            const Vec Ad = prob.apply_gramian(d) + opt.epsilon * d;
            const double dAd = g.inner(d, Ad);
            if (!(dAd > 0.0) || !std::isfinite(dAd)) {
                if (it == 0 && dAd == 0.0) break;
                throw SolverError("CG breakdown: <d, (Lambda + eps) d> = " + std::to_string(dAd) +
                                  "; try a larger epsilon or a finer mesh");
            }
            const double a = rr / dAd;
            x += a * d;
            r -= a * Ad;
            const double rn = g.inner(r, r);
            d = r + (rn / rr) * d;
            rr = rn;
            ++it;
            sol.residuals.push_back(std::sqrt(rr) / rhs_norm);
            if (std::sqrt(rr) < best_res) {
                best_res = std::sqrt(rr);
                best = x;
            }
        }
        sol.iterations = it;
        sol.converged = std::sqrt(rr) <= opt.cg_tol * rhs_norm;
        x = best;
    } else {
        sol.converged = true;
        x.setZero();
    }
    sol.phiT = x;
    sol.controls = prob.controls_from_adjoint(prob.solve_adjoint_backward(x));
    sol.uT_achieved = prob.forward(u0, &sol.controls);
    sol.miss = g.norm(sol.uT_achieved - uT);
    const double n0 = g.norm(u0), nT = g.norm(uT);
    sol.relative_miss = n0 > 0.0 ? sol.miss / n0 : (nT > 0.0 ? sol.miss / nT : sol.miss);
    return sol;
}

std::vector<HumSolution> hum_epsilon_sweep(const ControlProblem& prob, const Vec& u0, const Vec& uT,
                                           const std::vector<double>& epsilons, double cg_tol, int cg_maxit) {
    std::vector<HumSolution> out;
    Vec warm;
    for (double eps : epsilons) {
        HumOptions opt;
        opt.epsilon = eps;
        opt.cg_tol = cg_tol;
        opt.cg_maxit = cg_maxit;
        if (!out.empty()) {
            warm = out.back().phiT;
            opt.warm_start = &warm;
        }
        out.push_back(hum_solve(prob, u0, uT, opt));
    }
    return out;
}

NonlinearHumResult hum_solve_nonlinear(const ControlProblem& prob, const Vec& u0, const Vec& uT,
                                       const HumOptions& opt, int max_outer) {
    check_regime(prob);
    const Grid& g = prob.grid();
    NonlinearHumResult res;
    res.last = hum_solve(prob, u0, uT, opt);
    const double T = prob.steps() * prob.dt();
    auto run_nonlinear = [&](const ControlSignals& c) {
        ForcingData f;
        f.boundary = c.values;
        SimOptions so;
        so.scheme = Scheme::Nonlinear;
        so.T = T;
        so.dt = prob.dt();
        so.stride = 1;
        so.forcing = &f;
        return simulate(prob.config(), g, u0, so);
    };
    for (int outer = 0; outer < max_outer; ++outer) {
        const Trajectory tr = run_nonlinear(res.last.controls);
        res.misses.push_back(g.norm(tr.final_state - uT));
        std::vector<Vec> source;
        for (const Vec& y : tr.states) source.push_back(-nonlinear_term(g, y));
        // uT - (free response with the frozen nonlinear source)
        const Vec target = uT - prob.forward(u0, nullptr, &source) + prob.forward(u0, nullptr);
        HumOptions o = opt;
        o.warm_start = &res.last.phiT;
        HumSolution next = hum_solve(prob, u0, target, o);
        next.uT_achieved = prob.forward(u0, &next.controls, &source);
        next.miss = g.norm(next.uT_achieved - uT);
        res.last = std::move(next);
    }
    const Trajectory tr = run_nonlinear(res.last.controls);
    res.misses.push_back(g.norm(tr.final_state - uT));
    res.last.uT_achieved = tr.final_state;
    res.last.miss = res.misses.back();
    const double n0 = g.norm(u0);
    res.last.relative_miss = n0 > 0.0 ? res.last.miss / n0 : res.last.miss;
    return res;
}

Eigen::MatrixXd low_frequency_basis(const Grid& grid, double k_cut) {
    const int n = grid.ndof;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < grid.n_edges; ++j) {
        const double h = grid.h[j];
        for (int i = 0; i < grid.M[j]; ++i) {
            const int a = grid.index(j, i);
            const double s = 1.0 / h;
            S(a, a) += s;
            if (i + 1 < grid.M[j]) {
                const int b = grid.index(j, i + 1);
                S(b, b) += s;
                S(a, b) -= s;
                S(b, a) -= s;
            }
        }
    }
    const Vec isq = grid.weights.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd Sn = isq.asDiagonal() * S * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sn);
    int m = 0;
    while (m < n && es.eigenvalues()(m) <= k_cut * k_cut) ++m;
    if (m == 0) throw ConfigError("wavenumber cutoff below the lowest network mode");
    Eigen::MatrixXd V = isq.asDiagonal() * es.eigenvectors().leftCols(m);
    // fix the sign of each column for reproducibility
    for (int c = 0; c < m; ++c) {
        Eigen::Index idx;
        V.col(c).cwiseAbs().maxCoeff(&idx);
        if (V(idx, c) < 0) V.col(c) *= -1.0;
    }
    return V;
}

namespace {

Vec apply_kind(const ControlProblem& prob, GramianKind kind, const Vec& v) {
    return kind == GramianKind::Control ? prob.apply_gramian(v) : prob.apply_stabilization_gramian(v);
}

}  // namespace

SpectrumResult observability_spectrum(const ControlProblem& prob, GramianKind kind, int n_eigs, double k_cut,
                                      const std::vector<Vec>& extra) {
    const Grid& g = prob.grid();
    SpectrumResult res;
    res.cutoff_wavenumber = k_cut;
    res.basis = low_frequency_basis(g, k_cut);
    for (const Vec& y : extra) {
        if (y.size() != g.ndof) throw ConfigError("test vector size does not match the grid");
        Vec v = y;
        for (int rep = 0; rep < 2; ++rep)
            for (int i = 0; i < res.basis.cols(); ++i) v -= g.inner(res.basis.col(i), v) * res.basis.col(i);
        const double nv = g.norm(v);
        if (!(nv > 1e-10 * g.norm(y))) continue;
        res.basis.conservativeResize(Eigen::NoChange, res.basis.cols() + 1);
        res.basis.col(res.basis.cols() - 1) = v / nv;
    }
    const int m = static_cast<int>(res.basis.cols());
    res.subspace_dim = m;
    const Eigen::MatrixXd& V = res.basis;
    auto op = [&](const Eigen::VectorXd& c) -> Eigen::VectorXd {
        const Vec y = V * c;
        return V.transpose() * g.weights.asDiagonal() * apply_kind(prob, kind, y);
    };
    Eigen::MatrixXd Q(m, m);
    std::vector<double> alpha, beta;
    Eigen::VectorXd q = Eigen::VectorXd::Constant(m, 1.0 / std::sqrt(double(m)));
    int steps = 0;
    for (int k = 0; k < m; ++k) {
        Q.col(k) = q;
        Eigen::VectorXd w = op(q);
        const double a = q.dot(w);
        alpha.push_back(a);
        for (int rep = 0; rep < 2; ++rep)
            for (int i = 0; i <= k; ++i) w -= Q.col(i).dot(w) * Q.col(i);
        ++steps;
        const double b = w.norm();
        if (k + 1 == m || b < 1e-13 * std::max(1.0, std::abs(a))) break;
        beta.push_back(b);
        q = w / b;
    }
    if (!std::isfinite(alpha.back())) throw SolverError("Lanczos produced non-finite values");
    res.lanczos_steps = steps;
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), steps);
    Eigen::VectorXd sub(std::max(0, steps - 1));
    for (int i = 0; i + 1 < steps; ++i) sub(i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    for (int i = 0; i < std::min(n_eigs, steps); ++i) res.eigenvalues.push_back(es.eigenvalues()(i));
    return res;
}

double rayleigh_quotient(const ControlProblem& prob, GramianKind kind, const Vec& y) {
    const Grid& g = prob.grid();
    const double yy = g.inner(y, y);
    if (yy == 0.0) throw ConfigError("Rayleigh quotient of the zero vector");
    if (kind == GramianKind::Stabilization) return prob.stabilization_observation(y) / yy;
    ControlSignals c;
    prob.apply_gramian(y, &c);
    return c.inner(c) / yy;
}

void write_controls_csv(const ControlSignals& c, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot write " + path);
    const int N = static_cast<int>(c.values.cols()) - 1;
    std::fprintf(f, "t,g");
    for (int j = 1; j <= N; ++j) std::fprintf(f, ",g_%d", j);
    std::fprintf(f, "\n");
    for (int n = 0; n < c.values.rows(); ++n) {
        std::fprintf(f, "%.17g", n * c.dt);
        for (int k = 0; k <= N; ++k) std::fprintf(f, ",%.17g", c.values(n, k));
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

ControlSignals read_controls_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    if (rows.size() < 2) throw ConfigError("controls file has fewer than two samples");
    ControlSignals c;
    c.dt = rows[1][0] - rows[0][0];
    const int cols = static_cast<int>(rows[0].size()) - 1;
    c.values.resize(rows.size(), cols);
    for (size_t n = 0; n < rows.size(); ++n) {
        if (static_cast<int>(rows[n].size()) != cols + 1) throw ConfigError("ragged controls file");
        for (int k = 0; k < cols; ++k) c.values(n, k) = rows[n][k + 1];
    }
    return c;
}

}  // namespace kdvstar
