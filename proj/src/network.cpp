#include "kdvstar/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kdvstar/errors.hpp"

namespace kdvstar {

NetworkConfig build_config(int n_edges, const std::vector<double>& lengths, double alpha) {
    if (n_edges <= 0) throw ConfigError("n_edges must be positive");
    if (static_cast<int>(lengths.size()) != n_edges)
        throw ConfigError("lengths has " + std::to_string(lengths.size()) + " entries, expected " +
                          std::to_string(n_edges));
    if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
    for (double l : lengths) {
        if (!std::isfinite(l)) throw ConfigError("edge length must be finite");
        if (l <= 0.0) throw ConfigError("edge length must be positive");
    }
    if (alpha <= 0.5 * n_edges) throw ConfigError("coupling not dissipative: alpha <= N/2");
    NetworkConfig cfg;
    cfg.n_edges = n_edges;
    cfg.lengths = lengths;
    cfg.alpha = alpha;
    cfg.L = *std::max_element(lengths.begin(), lengths.end());
    return cfg;
}

double critical_length(int k, int l) {
    if (k < 1 || l < 1) throw ConfigError("critical_length needs k, l >= 1");
    const double kk = k, ll = l;
    return 2.0 * std::numbers::pi * std::sqrt((kk * kk + ll * ll + kk * ll) / 3.0);
}

std::optional<Witness> is_critical(double length, double tol, int k_max) {
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    for (int k = 1; k <= k_max; ++k) {
        // critical_length(k,k) is the smallest value for this k
        if (critical_length(k, k) > length + tol) break;
        for (int l = k; l <= k_max; ++l) {
            const double c = critical_length(k, l);
            if (c > length + tol) break;
            if (std::abs(c - length) <= tol) return Witness{k, l};
        }
    }
    return std::nullopt;
}

const char* regime_name(Regime r) { return r == Regime::Critical ? "Critical" : "NonCritical"; }

std::vector<int> CriticalityReport::critical_edges() const {
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(is_critical.size()); ++j)
        if (is_critical[j]) out.push_back(j);
    return out;
}

std::vector<int> CriticalityReport::reduced_critical_edges() const {
    auto out = critical_edges();
    if (!out.empty()) out.pop_back();
    return out;
}

CriticalityReport classify_network(const NetworkConfig& cfg, double tol, int k_max) {
    CriticalityReport rep;
    for (double l : cfg.lengths) {
        auto w = is_critical(l, tol, k_max);
        rep.is_critical.push_back(w.has_value());
        rep.witness.push_back(w);
        if (w) ++rep.count;
    }
    rep.regime = rep.count >= 2 ? Regime::Critical : Regime::NonCritical;
    return rep;
}

}  // namespace kdvstar
