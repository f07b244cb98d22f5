#pragma once

#include <string>
#include <vector>

#include "kdvstar/integrator.hpp"
#include "kdvstar/network.hpp"

namespace kdvstar {

/// Samples of (g, g_1..g_N) at t_n = n dt, n = 0..K.
struct ControlSignals {
    double dt = 0.0;
    Eigen::MatrixXd values;  // (K+1) x (N+1)

    int steps() const { return static_cast<int>(values.rows()) - 1; }
    /// Trapezoid-in-time L2 inner product.
    double inner(const ControlSignals& other) const;
};

struct AdjointTrajectory {
    std::vector<double> t;
    std::vector<double> E;                    // adjoint energy, t_0..t_K
    // traces as seen by the time-discrete observation, equal to the control columns
    std::vector<double> phi0;                 // phi(t, 0)
    std::vector<std::vector<double>> dxphiL;  // [edge][n], d_x phi_j(t, l_j)
    ControlSignals controls;                  // exact time-discrete adjoint of the control map
    Vec phi_initial;                          // phi(0)
};

/// Forward (LKdV_control) and backward adjoint solves sharing one time grid.
class ControlProblem {
public:
    ControlProblem(const NetworkConfig& cfg, const Grid& grid, double T, double dt, int startup_steps = 2);

    const Grid& grid() const { return grid_; }
    const NetworkConfig& config() const { return cfg_; }
    int steps() const { return K_; }
    double dt() const { return dt_; }

    /// u(T) from u0 under the given controls (null pointer: free evolution).
    Vec forward(const Vec& u0, const ControlSignals* controls, const std::vector<Vec>* source = nullptr,
                std::vector<double>* energy = nullptr) const;
    AdjointTrajectory solve_adjoint_backward(const Vec& phiT) const;
    ControlSignals controls_from_adjoint(const AdjointTrajectory& adj) const { return adj.controls; }
    /// Lambda phiT = forward(0, controls_from_adjoint(backward(phiT))).
    Vec apply_gramian(const Vec& phiT, ControlSignals* controls = nullptr) const;

    /// Stabilization Gramian: sum_n w_n S_n^* O^T W O S_n y with observation
    /// (u(0), d_x u_j(0)) weighted by (alpha - N/2, 1).
    Vec apply_stabilization_gramian(const Vec& y) const;
    double stabilization_observation(const Vec& y) const;  // <y, Lambda_s y>_h

    ControlSignals zero_controls() const;

private:
    NetworkConfig cfg_;
    Grid grid_;
    double dt_;
    int K_;
    SpatialOperator op_;
    Propagator fwd_;
    Propagator adj_;
    std::vector<double> w_;  // trapezoid weights

    Eigen::VectorXd observe_controls(const Vec& q) const;
    Vec observe_stabilization_adjoint(const Vec& u) const;
};

struct HumSolution {
    Vec phiT;
    ControlSignals controls;
    Vec uT_achieved;
    double miss = 0.0;
    double relative_miss = 0.0;  // miss / ||u0||_h (or / ||uT||_h when u0 = 0)
    int iterations = 0;
    std::vector<double> residuals;
    double epsilon = 0.0;
    bool converged = false;
};

struct HumOptions {
    double epsilon = 1e-8;
    double cg_tol = 1e-10;
    int cg_maxit = 200;
    const Vec* warm_start = nullptr;
};

/// CG on (Lambda + eps I) phiT = uT - S(T) u0 in the discrete L2 inner product, then a
/// verification forward solve. The returned iterate is the one with the smallest CG residual.
HumSolution hum_solve(const ControlProblem& prob, const Vec& u0, const Vec& uT, const HumOptions& opt);

/// Descending epsilon sweep, each solve warm-started from the previous one.
std::vector<HumSolution> hum_epsilon_sweep(const ControlProblem& prob, const Vec& u0, const Vec& uT,
                                           const std::vector<double>& epsilons, double cg_tol = 1e-10,
                                           int cg_maxit = 200);

/// Experimental nonlinear control: the nonlinearity along the current trajectory is
/// treated as a source and HUM is re-run, at most `max_outer` times.
struct NonlinearHumResult {
    HumSolution last;
    std::vector<double> misses;  // nonlinear miss after each outer iteration
};
NonlinearHumResult hum_solve_nonlinear(const ControlProblem& prob, const Vec& u0, const Vec& uT,
                                       const HumOptions& opt, int max_outer = 10);

enum class GramianKind { Control, Stabilization };

struct SpectrumResult {
    std::vector<double> eigenvalues;  // ascending, smallest n_eigs
    int subspace_dim = 0;
    int lanczos_steps = 0;
    double cutoff_wavenumber = 0.0;
    Eigen::MatrixXd basis;  // H-orthonormal filtered basis
};

/// H-orthonormal eigenvectors of the network Laplacian (Dirichlet at l_j, natural
/// at the junction) with wavenumber <= k_cut.
Eigen::MatrixXd low_frequency_basis(const Grid& grid, double k_cut);

/// Lanczos with full reorthogonalization on the Gramian compressed to the filtered basis,
/// enlarged by the `extra` vectors.
SpectrumResult observability_spectrum(const ControlProblem& prob, GramianKind kind, int n_eigs,
                                      double k_cut, const std::vector<Vec>& extra = {});

double rayleigh_quotient(const ControlProblem& prob, GramianKind kind, const Vec& y);

void write_controls_csv(const ControlSignals& c, const std::string& path);
ControlSignals read_controls_csv(const std::string& path);

}  // namespace kdvstar
