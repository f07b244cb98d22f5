#include "kdvstar/discretization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unsupported/Eigen/SparseExtra>

#include "kdvstar/errors.hpp"

namespace kdvstar {

double Grid::min_h() const { return *std::min_element(h.begin(), h.end()); }

Vec Grid::edge_values(const Vec& u, int edge) const {
    Vec v = Vec::Zero(M[edge] + 1);
    v(0) = u(0);
    for (int i = 1; i < M[edge]; ++i) v(i) = u(offset[edge] + i - 1);
    return v;
}

double Grid::norm(const Vec& a) const { return std::sqrt(inner(a, a)); }

Grid build_grid(const NetworkConfig& cfg, const std::vector<int>& M) {
    if (static_cast<int>(M.size()) != cfg.n_edges)
        throw ConfigError("mesh list length does not match n_edges");
    Grid g;
    g.n_edges = cfg.n_edges;
    g.M = M;
    g.lengths = cfg.lengths;
    int next = 1;
    for (int j = 0; j < cfg.n_edges; ++j) {
        if (M[j] < 8)
            throw ConfigError("mesh too coarse: edge " + std::to_string(j + 1) + " has M=" +
                              std::to_string(M[j]) + " < 8");
        g.h.push_back(cfg.lengths[j] / M[j]);
        g.offset.push_back(next);
        next += M[j] - 1;
    }
    g.ndof = next;
    g.weights = Vec::Zero(g.ndof);
    for (int j = 0; j < g.n_edges; ++j) {
        g.weights(0) += 0.5 * g.h[j];
        for (int i = 1; i < M[j]; ++i) g.weights(g.index(j, i)) = g.h[j];
    }
    return g;
}

Grid build_grid(const NetworkConfig& cfg, double nodes_per_unit) {
    if (!(nodes_per_unit > 0.0)) throw ConfigError("resolution must be positive");
    std::vector<int> M;
    for (double l : cfg.lengths) M.push_back(static_cast<int>(std::lround(l * nodes_per_unit)));
    return build_grid(cfg, M);
}

namespace {

using Row = std::map<int, double>;  // local node -> coefficient

void axpy(Row& dst, double a, const Row& src) {
    for (const auto& [k, v] : src) dst[k] += a * v;
}

// Second-difference functionals w_k on local nodes 0..M, far end via the Neumann ghost.
std::vector<Row> second_differences(int M, double h) {
    const double s = 1.0 / (h * h);
    std::vector<Row> w(M + 1);
    w[0] = {{0, 2 * s}, {1, -5 * s}, {2, 4 * s}, {3, -s}};
    for (int k = 1; k < M; ++k) w[k] = {{k - 1, s}, {k, -2 * s}, {k + 1, s}};
    w[M] = {{M - 1, 2 * s}, {M, -2 * s}};
    return w;
}

}  // namespace

SpatialOperator assemble_linear_operator(const Grid& grid, const NetworkConfig& cfg) {
    if (grid.n_edges != cfg.n_edges) throw ConfigError("grid does not match config");
    std::vector<Eigen::Triplet<double>> trip;
    const double H00 = grid.weights(0);
    Row junction;
    for (int j = 0; j < grid.n_edges; ++j) {
        const int M = grid.M[j];
        const double h = grid.h[j];
        const auto w = second_differences(M, h);
        auto emit = [&](int row, const Row& r, double scale) {
            for (const auto& [k, v] : r) {
                if (k >= M || v == 0.0) continue;
                trip.emplace_back(row, grid.index(j, k), scale * v);
            }
        };
        for (int i = 1; i < M; ++i) {
            Row r;
            r[i + 1] -= 0.5 / h;
            r[i - 1] += 0.5 / h;
            axpy(r, -0.5 / h, w[i + 1]);
            axpy(r, 0.5 / h, w[i - 1]);
            emit(grid.index(j, i), r, 1.0);
        }
        Row r0;
        r0[0] += 0.5;
        r0[1] -= 0.5;
        axpy(r0, -0.5, w[0]);
        axpy(r0, -0.5, w[1]);
        emit(0, r0, 1.0 / H00);
    }
    trip.emplace_back(0, 0, -cfg.alpha / H00);

    SpatialOperator op;
    op.A.resize(grid.ndof, grid.ndof);
    op.A.setFromTriplets(trip.begin(), trip.end());
    op.A.makeCompressed();

    std::vector<Eigen::Triplet<double>> bt;
    bt.emplace_back(0, 0, 1.0 / H00);
    for (int j = 0; j < grid.n_edges; ++j)
        bt.emplace_back(grid.index(j, grid.M[j] - 1), j + 1, -1.0 / (grid.h[j] * grid.h[j]));
    op.B.resize(grid.ndof, grid.n_edges + 1);
    op.B.setFromTriplets(bt.begin(), bt.end());

    int bw = 0;
    for (int c = 0; c < op.A.outerSize(); ++c)
        for (SpMat::InnerIterator it(op.A, c); it; ++it)
            if (it.row() != 0 && it.col() != 0) bw = std::max(bw, std::abs(int(it.row()) - int(it.col())));
    op.bandwidth = bw;
    return op;
}

SpatialOperator assemble_adjoint_operator(const Grid& grid, const NetworkConfig& cfg) {
    SpatialOperator fwd = assemble_linear_operator(grid, cfg);
    SpatialOperator op;
    const Vec& w = grid.weights;
    SpMat At = fwd.A.transpose();
    op.A = w.cwiseInverse().asDiagonal() * At * w.asDiagonal();
    op.A.makeCompressed();
    op.B = fwd.B;
    op.bandwidth = fwd.bandwidth;
    op.adjoint = true;
    return op;
}

double dx_at_junction(const Grid& grid, const Vec& u, int edge) {
    const double h = grid.h[edge];
    return (-3.0 * u(0) + 4.0 * u(grid.index(edge, 1)) - u(grid.index(edge, 2))) / (2.0 * h);
}

double dx_at_far_end(const Grid& grid, const Vec& u, int edge) {
    const int M = grid.M[edge];
    const double h = grid.h[edge];
    return (-4.0 * u(grid.index(edge, M - 1)) + u(grid.index(edge, M - 2))) / (2.0 * h);
}

double d2_at_junction(const Grid& grid, const Vec& u, int edge) {
    const double h = grid.h[edge];
    return (2.0 * u(0) - 5.0 * u(grid.index(edge, 1)) + 4.0 * u(grid.index(edge, 2)) -
            u(grid.index(edge, 3))) /
           (h * h);
}

double junction_functional(const Grid& grid, const NetworkConfig& cfg, const Vec& u) {
    double s = cfg.alpha * u(0);
    for (int j = 0; j < grid.n_edges; ++j) s += d2_at_junction(grid, u, j);
    return s;
}

namespace {

// SBP first derivative with trapezoid norm on nodes 0..M.
Vec sbp_derivative(const Vec& v, double h) {
    const int M = static_cast<int>(v.size()) - 1;
    Vec d(M + 1);
    d(0) = (v(1) - v(0)) / h;
    for (int i = 1; i < M; ++i) d(i) = (v(i + 1) - v(i - 1)) / (2.0 * h);
    d(M) = (v(M) - v(M - 1)) / h;
    return d;
}

}  // namespace

Vec nonlinear_term(const Grid& grid, const Vec& u) {
    Vec out = Vec::Zero(grid.ndof);
    const double H00 = grid.weights(0);
    const double u0 = u(0);
    for (int j = 0; j < grid.n_edges; ++j) {
        const Vec v = grid.edge_values(u, j);
        const Vec dv = sbp_derivative(v, grid.h[j]);
        const Vec dv2 = sbp_derivative(v.cwiseProduct(v), grid.h[j]);
        for (int i = 1; i < grid.M[j]; ++i)
            out(grid.index(j, i)) = (v(i) * dv(i) + dv2(i)) / 3.0;
        out(0) += 0.5 * grid.h[j] * (v(0) * dv(0) + dv2(0)) / 3.0 / H00;
    }
    out(0) += grid.n_edges / 3.0 * u0 * u0 / H00;
    return out;
}

double gradient_norm2(const Grid& grid, const Vec& u) {
    double s = 0.0;
    for (int j = 0; j < grid.n_edges; ++j) {
        const Vec v = grid.edge_values(u, j);
        const double h = grid.h[j];
        for (int i = 0; i < grid.M[j]; ++i) {
            const double d = (v(i + 1) - v(i)) / h;
            s += h * d * d;
        }
    }
    return s;
}

Vec apply_damping(const DampingProfile& profile, const Grid& grid, const Vec& u) {
    if (profile.nodal.size() != grid.ndof || u.size() != grid.ndof)
        throw ConfigError("damping profile does not match the grid");
    return profile.nodal.cwiseProduct(u);
}

void write_matrix_market(const SpMat& m, const std::string& path) {
    if (!Eigen::saveMarket(m, path)) throw ConfigError("cannot write " + path);
}

SpMat read_matrix_market(const std::string& path) {
    SpMat m;
    if (!Eigen::loadMarket(m, path)) throw ConfigError("cannot read " + path);
    return m;
}

}  // namespace kdvstar
