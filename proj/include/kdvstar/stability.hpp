#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "kdvstar/integrator.hpp"
#include "kdvstar/network.hpp"

namespace kdvstar {

struct DecayFit {
    double mu = 0.0;
    double C = 0.0;
    double R2 = 0.0;
    double t_a = 0.0;
    double t_b = 0.0;
    int samples = 0;
    bool no_decay = false;
};

/// Least squares on (t, log E) over [t_a, t_b]; E ~ C^2 E(0) exp(-2 mu t).
/// Samples after the first nonpositive value, or below floor_rel times the
/// first windowed value, are dropped.
DecayFit fit_decay(const std::vector<double>& E, const std::vector<double>& t, double t_a,
                   double t_b, double floor_rel = 1e-20);
/// Window [0.1 T, T].
DecayFit fit_decay(const std::vector<double>& E, const std::vector<double>& t);

using cplx = std::complex<double>;

/// z(x) = sum_i c_i exp(r_i x) solving lambda z + z' + z''' = 0 with
/// z(0) = z'(0) = z(l) = z'(l) = 0, scaled so z''(0) = 1.
struct RosierMode {
    double length = 0.0;
    Witness kl{1, 1};
    cplx lambda{0.0, 0.0};
    std::array<cplx, 3> roots{};
    std::array<cplx, 3> coeffs{};
    bool closed_form = false;
    double residual = 0.0;  // max of ODE and boundary residuals, relative to max |z|

    cplx value(double x, int derivative = 0) const;
};

RosierMode rosier_mode(double length, Witness kl, double tol = 1e-9);

struct CriticalMode {
    cplx lambda{0.0, 0.0};
    int edge1 = -1, edge2 = -1;
    RosierMode z1, z2;
    cplx z1pp0, z2pp0;
    Vec y;       // real part on the grid
    Vec y_imag;  // imaginary part (zero for lambda = 0)
    double junction_residual = 0.0;
};

/// Two-edge mode (z2''(0) z1, -z1''(0) z2, 0, ...) on the first two critical edges.
CriticalMode build_critical_mode(const NetworkConfig& cfg, const Grid& grid);

/// Smooth profile from per-edge sine coefficients: sum_k c_jk sin(k pi x/l)(l - x)/l plus a
/// junction lifting a (1 - x/l)^2 with a chosen so sum_j u_j''(0) + alpha u(0) = 0.
Vec sine_profile(const NetworkConfig& cfg, const Grid& grid,
                 const std::vector<std::vector<double>>& coeffs);

/// Uniform [-1, 1) from std::mt19937_64 bits; the engine sequence is fixed by the
/// standard, so draws agree across standard libraries (distributions do not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return 2.0 * static_cast<double>(eng_() >> 11) * 0x1.0p-53 - 1.0; }

private:
    std::mt19937_64 eng_;
};

/// `count` random 5-mode sine profiles scaled to ||u||_h = amplitude.
std::vector<Vec> random_seeds(const NetworkConfig& cfg, const Grid& grid, int count,
                              std::uint64_t rng_seed, double amplitude = 1.0);

/// Hat-ramped indicator a = c on [lo, hi], linear to zero over 2h outside.
/// Empty supports mean the middle third of each damped edge.
DampingProfile make_damping(const NetworkConfig& cfg, const Grid& grid,
                            const std::vector<int>& damped_edges, double c,
                            const std::vector<std::pair<double, double>>& supports = {});

/// I_c* for critical networks, all edges otherwise.
std::vector<int> default_damped_edges(const NetworkConfig& cfg);

struct CampaignResult {
    std::vector<DecayFit> fits;
    double mu_min = 0.0;
    double mu_median = 0.0;
    bool decay_observed = false;
};

CampaignResult decay_campaign(const NetworkConfig& cfg, const Grid& grid, const SimOptions& opt,
                              const std::vector<Vec>& seeds, int threads = 1);

}  // namespace kdvstar
