#include "kdvstar/stability.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "kdvstar/errors.hpp"
#include "kdvstar/parallel.hpp"

namespace kdvstar {

DecayFit fit_decay(const std::vector<double>& E, const std::vector<double>& t, double t_a,
                   double t_b, double floor_rel) {
    if (E.size() != t.size()) throw ConfigError("energy and time series differ in length");
    std::vector<double> xs, ys;
    double ref = -1.0;
    for (size_t i = 0; i < E.size(); ++i) {
        if (t[i] < t_a || t[i] > t_b) continue;
        if (!(E[i] > 0.0)) break;
        if (ref < 0.0) ref = E[i];
        if (E[i] < floor_rel * ref) break;
        xs.push_back(t[i]);
        ys.push_back(std::log(E[i]));
    }
    if (xs.size() < 10) throw ConfigError("decay fit needs at least 10 positive samples in the window");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ssr = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - intercept - slope * xs[i];
        ssr += r * r;
    }
    DecayFit fit;
    fit.t_a = xs.front();
    fit.t_b = xs.back();
    fit.samples = static_cast<int>(xs.size());
    // syy at rounding level means a flat series
    const bool flat = syy <= 1e-28 * n * std::max(1.0, my * my);
    fit.R2 = flat ? 0.0 : std::clamp(1.0 - ssr / syy, 0.0, 1.0);
    fit.mu = slope < 0.0 && !flat ? -0.5 * slope : 0.0;
    // energy that loses less than 0.1% over the window is not decaying
    fit.no_decay = fit.mu == 0.0 || ys.front() - ys.back() < 1e-3;
    fit.C = E.front() > 0.0 ? std::exp(0.5 * intercept) / std::sqrt(E.front()) : 0.0;
    return fit;
}

DecayFit fit_decay(const std::vector<double>& E, const std::vector<double>& t) {
    if (t.empty()) throw ConfigError("empty series");
    return fit_decay(E, t, 0.1 * t.back(), t.back());
}

cplx RosierMode::value(double x, int derivative) const {
    cplx s = 0.0;
    for (int i = 0; i < 3; ++i) s += coeffs[i] * std::pow(roots[i], derivative) * std::exp(roots[i] * x);
    return s;
}

namespace {

std::array<cplx, 3> cubic_roots(cplx lambda) {
    Eigen::Matrix3cd comp = Eigen::Matrix3cd::Zero();
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    comp(0, 2) = -lambda;
    comp(1, 2) = -1.0;
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(comp, false);
    std::array<cplx, 3> r{es.eigenvalues()(0), es.eigenvalues()(1), es.eigenvalues()(2)};
    std::sort(r.begin(), r.end(), [](cplx a, cplx b) { return a.imag() < b.imag(); });
    return r;
}

Eigen::Matrix<cplx, 4, 3> boundary_matrix(const std::array<cplx, 3>& r, double len) {
    Eigen::Matrix<cplx, 4, 3> m;
    for (int i = 0; i < 3; ++i) {
        const cplx e = std::exp(r[i] * len);
        m(0, i) = 1.0;
        m(1, i) = r[i];
        m(2, i) = e;
        m(3, i) = r[i] * e;
    }
    return m;
}

double sigma_min(double rho, double len) {
    const auto r = cubic_roots(cplx(0.0, rho));
    Eigen::JacobiSVD<Eigen::Matrix<cplx, 4, 3>> svd(boundary_matrix(r, len));
    return svd.singularValues()(2);
}

void finish_mode(RosierMode& m) {
    const cplx zpp = m.value(0.0, 2);
    for (auto& c : m.coeffs) c /= zpp;
    double zmax = 0.0, ode = 0.0;
    const int S = 2000;
    for (int s = 0; s <= S; ++s) {
        const double x = m.length * s / S;
        zmax = std::max(zmax, std::abs(m.value(x)));
        ode = std::max(ode, std::abs(m.lambda * m.value(x) + m.value(x, 1) + m.value(x, 3)));
    }
    double bc = std::max({std::abs(m.value(0.0)), std::abs(m.value(0.0, 1)), std::abs(m.value(m.length)),
                          std::abs(m.value(m.length, 1))});
    m.residual = std::max(ode, bc) / zmax;
}

}  // namespace

RosierMode rosier_mode(double length, Witness kl, double tol) {
    auto w = is_critical(length, tol, std::max({50, kl.first, kl.second}));
    if (!w) throw ConfigError("not critical: no Rosier mode exists for length " + std::to_string(length));
    if (kl.first > kl.second) std::swap(kl.first, kl.second);
    if (std::abs(critical_length(kl.first, kl.second) - length) > tol)
        throw ConfigError("length does not match the critical length of the given (k,l)");
    RosierMode m;
    m.length = length;
    m.kl = kl;
    if (kl == Witness{1, 1}) {
        // 1 - cos x
        m.closed_form = true;
        m.roots = {cplx(0, -1), cplx(0, 0), cplx(0, 1)};
        m.coeffs = {cplx(-0.5, 0), cplx(1, 0), cplx(-0.5, 0)};
        finish_mode(m);
        return m;
    }
    // lambda = i rho with real rho: all three roots are imaginary for |rho| < 2/(3 sqrt 3)
    const double rho_max = 2.0 / (3.0 * std::sqrt(3.0)) * (1.0 - 1e-9);
    const int S = 4000;
    std::vector<double> sv(S + 1);
    for (int i = 0; i <= S; ++i) sv[i] = sigma_min(rho_max * i / S, length);
    double best_rho = 0.0, best_sv = 1e300;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int i = 0; i <= S; ++i) {
        const bool left = i == 0 || sv[i] <= sv[i - 1];
        const bool right = i == S || sv[i] <= sv[i + 1];
        if (!(left && right)) continue;
        double a = rho_max * std::max(0, i - 1) / S, b = rho_max * std::min(S, i + 1) / S;
        double c = b - g * (b - a), d = a + g * (b - a);
        double fc = sigma_min(c, length), fd = sigma_min(d, length);
        for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
            if (fc < fd) {
                b = d, d = c, fd = fc;
                c = b - g * (b - a);
                fc = sigma_min(c, length);
            } else {
                a = c, c = d, fc = fd;
                d = a + g * (b - a);
                fd = sigma_min(d, length);
            }
        }
        double rho = 0.5 * (a + b), f = sigma_min(rho, length);
        if (sv[i] < f) rho = rho_max * i / S, f = sv[i];
        if (f < best_sv) best_sv = f, best_rho = rho;
    }
    if (best_sv > 1e-6) throw SolverError("Rosier eigenproblem: no mode found (sigma_min " + std::to_string(best_sv) + ")");
    m.lambda = cplx(0.0, best_rho);
    m.roots = cubic_roots(m.lambda);
    Eigen::JacobiSVD<Eigen::Matrix<cplx, 4, 3>> svd(boundary_matrix(m.roots, length), Eigen::ComputeFullV);
    for (int i = 0; i < 3; ++i) m.coeffs[i] = svd.matrixV()(i, 2);
    finish_mode(m);
    return m;
}

CriticalMode build_critical_mode(const NetworkConfig& cfg, const Grid& grid) {
    const auto rep = classify_network(cfg);
    const auto crit = rep.critical_edges();
    if (crit.size() < 2)
        throw RegimeError("critical mode needs at least two critical edges; regime is " +
                          std::string(regime_name(rep.regime)));
    CriticalMode cm;
    cm.edge1 = crit[0];
    cm.edge2 = crit[1];
    cm.z1 = rosier_mode(cfg.lengths[cm.edge1], *rep.witness[cm.edge1], cfg.crit_tol);
    cm.z2 = rosier_mode(cfg.lengths[cm.edge2], *rep.witness[cm.edge2], cfg.crit_tol);
    if (std::abs(cm.z1.lambda - cm.z2.lambda) > 1e-8)
        throw ConfigError("critical edges have different Rosier eigenvalues; no common mode");
    cm.lambda = cm.z1.lambda;
    cm.z1pp0 = cm.z1.value(0.0, 2);
    cm.z2pp0 = cm.z2.value(0.0, 2);
    cm.y = Vec::Zero(grid.ndof);
    cm.y_imag = Vec::Zero(grid.ndof);
    for (int i = 1; i < grid.M[cm.edge1]; ++i) {
        const cplx v = cm.z2pp0 * cm.z1.value(grid.x(cm.edge1, i));
        cm.y(grid.index(cm.edge1, i)) = v.real();
        cm.y_imag(grid.index(cm.edge1, i)) = v.imag();
    }
    for (int i = 1; i < grid.M[cm.edge2]; ++i) {
        const cplx v = -cm.z1pp0 * cm.z2.value(grid.x(cm.edge2, i));
        cm.y(grid.index(cm.edge2, i)) = v.real();
        cm.y_imag(grid.index(cm.edge2, i)) = v.imag();
    }
    double res = std::abs(cm.y(0));
    double sum_d2 = 0.0;
    for (int j = 0; j < grid.n_edges; ++j) {
        res = std::max(res, std::abs(dx_at_junction(grid, cm.y, j)));
        sum_d2 += d2_at_junction(grid, cm.y, j);
    }
    cm.junction_residual = std::max(res, std::abs(sum_d2));
    return cm;
}

Vec sine_profile(const NetworkConfig& cfg, const Grid& grid,
                 const std::vector<std::vector<double>>& coeffs) {
    if (static_cast<int>(coeffs.size()) != grid.n_edges) throw ConfigError("one coefficient list per edge expected");
    const double pi = std::numbers::pi;
    double s = 0.0, lift = cfg.alpha;
    for (int j = 0; j < grid.n_edges; ++j) {
        const double l = grid.lengths[j];
        for (size_t k = 0; k < coeffs[j].size(); ++k) s += coeffs[j][k] * (-2.0 * (k + 1) * pi / (l * l));
        lift += 2.0 / (l * l);
    }
    const double a = -s / lift;
    Vec u = Vec::Zero(grid.ndof);
    u(0) = a;
    for (int j = 0; j < grid.n_edges; ++j) {
        const double l = grid.lengths[j];
        for (int i = 1; i < grid.M[j]; ++i) {
            const double x = grid.x(j, i);
            double v = a * (1.0 - x / l) * (1.0 - x / l);
            for (size_t k = 0; k < coeffs[j].size(); ++k)
                v += coeffs[j][k] * std::sin((k + 1) * pi * x / l) * (l - x) / l;
            u(grid.index(j, i)) = v;
        }
    }
    return u;
}

std::vector<Vec> random_seeds(const NetworkConfig& cfg, const Grid& grid, int count,
                              std::uint64_t rng_seed, double amplitude) {
    Rng rng(rng_seed);
    std::vector<Vec> out;
    for (int s = 0; s < count; ++s) {
        std::vector<std::vector<double>> c(grid.n_edges, std::vector<double>(5));
        for (auto& edge : c)
            for (double& v : edge) v = rng.uniform();
        Vec u = sine_profile(cfg, grid, c);
        u *= amplitude / grid.norm(u);
        out.push_back(std::move(u));
    }
    return out;
}

DampingProfile make_damping(const NetworkConfig& cfg, const Grid& grid,
                            const std::vector<int>& damped_edges, double c,
                            const std::vector<std::pair<double, double>>& supports) {
    if (damped_edges.empty()) throw ConfigError("damping requested on an empty edge set");
    if (!(c > 0.0)) throw ConfigError("damping floor must be positive");
    if (!supports.empty() && supports.size() != damped_edges.size())
        throw ConfigError("one support interval per damped edge expected");
    DampingProfile p;
    p.damped_edges = damped_edges;
    p.a.resize(grid.n_edges);
    for (int j = 0; j < grid.n_edges; ++j) p.a[j] = Vec::Zero(grid.M[j] + 1);
    p.nodal = Vec::Zero(grid.ndof);
    for (size_t e = 0; e < damped_edges.size(); ++e) {
        const int j = damped_edges[e];
        if (j < 0 || j >= cfg.n_edges) throw ConfigError("damped edge index out of range");
        const double l = cfg.lengths[j], h = grid.h[j];
        const double lo = supports.empty() ? l / 3.0 : supports[e].first;
        const double hi = supports.empty() ? 2.0 * l / 3.0 : supports[e].second;
        if (!(lo < hi)) throw ConfigError("empty damping support");
        if (lo - 2.0 * h <= 0.0 || hi + 2.0 * h >= l) throw ConfigError("damping support touches an edge endpoint");
        for (int i = 0; i <= grid.M[j]; ++i) {
            const double x = grid.x(j, i);
            const double dist = std::max({lo - x, x - hi, 0.0});
            p.a[j](i) = c * std::max(0.0, 1.0 - dist / (2.0 * h));
        }
        for (int i = 1; i < grid.M[j]; ++i) p.nodal(grid.index(j, i)) = p.a[j](i);
        p.x_lo.push_back(lo);
        p.x_hi.push_back(hi);
        p.floor_c.push_back(c);
    }
    return p;
}

std::vector<int> default_damped_edges(const NetworkConfig& cfg) {
    const auto rep = classify_network(cfg);
    if (rep.regime == Regime::Critical) return rep.reduced_critical_edges();
    std::vector<int> all(cfg.n_edges);
    for (int j = 0; j < cfg.n_edges; ++j) all[j] = j;
    return all;
}

CampaignResult decay_campaign(const NetworkConfig& cfg, const Grid& grid, const SimOptions& opt,
                              const std::vector<Vec>& seeds, int threads) {
    CampaignResult res;
    res.fits.resize(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), threads, [&](int s) {
        const Trajectory tr = simulate(cfg, grid, seeds[s], opt);
        res.fits[s] = fit_decay(tr.E, tr.t);
    });
    std::vector<double> mus;
    bool ok = !seeds.empty();
    for (const auto& f : res.fits) {
        mus.push_back(f.mu);
        ok = ok && !f.no_decay && f.R2 > 0.99;
    }
    res.decay_observed = ok;
    if (!mus.empty()) {
        std::sort(mus.begin(), mus.end());
        res.mu_min = mus.front();
        const size_t n = mus.size();
        res.mu_median = n % 2 ? mus[n / 2] : 0.5 * (mus[n / 2 - 1] + mus[n / 2]);
    }
    return res;
}

}  // namespace kdvstar
