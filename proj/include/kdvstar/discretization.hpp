#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "kdvstar/network.hpp"

namespace kdvstar {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Uniform mesh per edge, one shared junction DOF, u(l_j) = 0 eliminated.
/// Global index 0 is the junction; edge j node i (1 <= i < M_j) is offset[j] + i - 1.
struct Grid {
    int n_edges = 0;
    std::vector<int> M;
    std::vector<double> h;
    std::vector<double> lengths;
    std::vector<int> offset;
    int ndof = 0;
    Vec weights;  // trapezoid quadrature, diagonal of H

    int index(int edge, int i) const { return i == 0 ? 0 : offset[edge] + i - 1; }
    double x(int edge, int i) const { return i * h[edge]; }
    double min_h() const;
    /// Values of one edge at nodes 0..M_j (the far-end value is the eliminated zero).
    Vec edge_values(const Vec& u, int edge) const;
    double inner(const Vec& a, const Vec& b) const { return a.dot(weights.cwiseProduct(b)); }
    double norm(const Vec& a) const;
};

Grid build_grid(const NetworkConfig& cfg, const std::vector<int>& M);
/// M_j = round(l_j * nodes_per_unit).
Grid build_grid(const NetworkConfig& cfg, double nodes_per_unit);

/// A_h ~ -(d/dx + d^3/dx^3) with junction and far-end conditions folded in.
/// B maps the N+1 boundary data (g, g_1..g_N) into the right-hand side.
struct SpatialOperator {
    SpMat A;
    SpMat B;  // ndof x (N+1)
    int order = 2;
    int bandwidth = 0;
    bool adjoint = false;
};

SpatialOperator assemble_linear_operator(const Grid& grid, const NetworkConfig& cfg);

/// H^{-1} A^T H: exact discrete adjoint in the trapezoid inner product.
SpatialOperator assemble_adjoint_operator(const Grid& grid, const NetworkConfig& cfg);

/// Second-order one-sided derivative at x = 0 on an edge.
double dx_at_junction(const Grid& grid, const Vec& u, int edge);
/// Second-order one-sided derivative at x = l_j (uses u(l_j) = 0).
double dx_at_far_end(const Grid& grid, const Vec& u, int edge);
/// (2u0 - 5u1 + 4u2 - u3)/h^2 on an edge.
double d2_at_junction(const Grid& grid, const Vec& u, int edge);
/// sum_j d2_j u + alpha u(0).
double junction_functional(const Grid& grid, const NetworkConfig& cfg, const Vec& u);

/// Skew split form (1/3)[u Du + D(u^2)] plus the junction flux (N/3) u(0)^2,
/// arranged so that u' = A u - nonlinear_term(u) keeps <u, N(u)>_h + (N/3) u0^3 = 0.
Vec nonlinear_term(const Grid& grid, const Vec& u);

/// Discrete L2 seminorm squared of u_x: sum over cells of h (forward difference)^2.
double gradient_norm2(const Grid& grid, const Vec& u);

struct DampingProfile {
    std::vector<Vec> a;  // per edge, nodes 0..M_j
    std::vector<double> x_lo, x_hi, floor_c;
    std::vector<int> damped_edges;
    Vec nodal;  // sampled on the global layout
};

Vec apply_damping(const DampingProfile& profile, const Grid& grid, const Vec& u);

/// Matrix Market coordinate format.
void write_matrix_market(const SpMat& m, const std::string& path);
SpMat read_matrix_market(const std::string& path);

}  // namespace kdvstar
