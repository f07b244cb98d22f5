#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace kdvstar {

struct NetworkConfig {
    int n_edges = 0;
    std::vector<double> lengths;
    double alpha = 0.0;
    double L = 0.0;  // max edge length

    double crit_tol = 1e-9;
    int k_max = 50;

    /// alpha - N/2, the junction dissipation margin.
    double margin() const { return alpha - 0.5 * n_edges; }
};

/// Validates and returns a config. Throws ConfigError.
NetworkConfig build_config(int n_edges, const std::vector<double>& lengths, double alpha);

/// 2*pi*sqrt((k^2 + l^2 + k*l)/3).
double critical_length(int k, int l);

using Witness = std::pair<int, int>;

/// Smallest lexicographic (k,l), k <= l <= k_max, within tol of `length`.
std::optional<Witness> is_critical(double length, double tol = 1e-9, int k_max = 50);

enum class Regime { NonCritical, Critical };

const char* regime_name(Regime r);

struct CriticalityReport {
    std::vector<bool> is_critical;
    std::vector<std::optional<Witness>> witness;
    int count = 0;
    Regime regime = Regime::NonCritical;

    std::vector<int> critical_edges() const;
    /// I_c with its largest index removed.
    std::vector<int> reduced_critical_edges() const;
};

CriticalityReport classify_network(const NetworkConfig& cfg, double tol, int k_max);
inline CriticalityReport classify_network(const NetworkConfig& cfg) {
    return classify_network(cfg, cfg.crit_tol, cfg.k_max);
}

}  // namespace kdvstar
