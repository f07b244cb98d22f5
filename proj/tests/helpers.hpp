#pragma once

#include <catch_amalgamated.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "kdvstar/control.hpp"
#include "kdvstar/errors.hpp"
#include "kdvstar/io.hpp"
#include "kdvstar/stability.hpp"

namespace th {

inline const double pi = std::numbers::pi;

inline kdvstar::NetworkConfig noncritical() {
    return kdvstar::build_config(3, {1.0, std::numbers::sqrt2, std::numbers::e}, 2.0);
}
inline kdvstar::NetworkConfig critical() { return kdvstar::build_config(3, {2 * pi, 2 * pi, 1.0}, 2.0); }

/// Independent evaluation of the closed-form network field
/// u_j(x) = c_j sin(k x)(l - x)/l + a (1 - x/l)^2, k = pi/l, with a from the junction condition.
struct SmoothField {
    std::vector<double> lengths, c;
    double a = 0.0;

    SmoothField(const kdvstar::NetworkConfig& cfg, std::vector<double> coeffs) : lengths(cfg.lengths), c(std::move(coeffs)) {
        double s = 0.0, lift = cfg.alpha;
        for (size_t j = 0; j < lengths.size(); ++j) {
            const double l = lengths[j];
            s += c[j] * (-2.0 * pi / (l * l));
            lift += 2.0 / (l * l);
        }
        a = -s / lift;
    }
    // derivative order d in 0..3
    double operator()(int j, double x, int d = 0) const {
        const double l = lengths[j], k = pi / l, r = (l - x) / l, sn = std::sin(k * x), cs = std::cos(k * x);
        double s = 0.0, lift = 0.0;
        switch (d) {
            case 0: s = sn * r; lift = a * (1 - x / l) * (1 - x / l); break;
            case 1: s = k * cs * r - sn / l; lift = -2.0 * a * (1 - x / l) / l; break;
            case 2: s = -k * k * sn * r - 2.0 * k * cs / l; lift = 2.0 * a / (l * l); break;
            default: s = -k * k * k * cs * r + 3.0 * k * k * sn / l; lift = 0.0; break;
        }
        return c[j] * s + lift;
    }
    kdvstar::Vec sample(const kdvstar::Grid& g, int d = 0) const {
        kdvstar::Vec u(g.ndof);
        u(0) = (*this)(0, 0.0, d);
        for (int j = 0; j < g.n_edges; ++j)
            for (int i = 1; i < g.M[j]; ++i) u(g.index(j, i)) = (*this)(j, g.x(j, i), d);
        return u;
    }
};

}  // namespace th
