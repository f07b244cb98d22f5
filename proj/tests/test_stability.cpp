#include "helpers.hpp"

using namespace kdvstar;
using Catch::Approx;

namespace {

std::vector<double> grid_t(int n, double T) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = T * i / (n - 1);
    return t;
}

}  // namespace

TEST_CASE("fit_decay on synthetic series", "[stability]") {
    const auto t = grid_t(100, 5.0);
    std::vector<double> E, flat(100, 2.0), noisy;
    Rng rng(3);
    for (double s : t) {
        E.push_back(5.0 * std::exp(-1.4 * s));
        noisy.push_back(5.0 * std::exp(-1.4 * s) * (1.0 + 0.01 * rng.uniform()));
    }
    const auto f = fit_decay(E, t);
    CHECK(f.mu == Approx(0.7).epsilon(1e-12));
    CHECK(f.R2 == Approx(1.0).epsilon(1e-12));
    CHECK(f.t_a >= 0.5);
    CHECK(f.t_a < 0.5 + 5.0 / 99);
    CHECK(f.t_b == Approx(5.0));
    CHECK(f.samples >= 10);
    // E = C^2 E(0) exp(-2 mu t) with E(0) = 5, so C = 1
    CHECK(f.C == Approx(1.0).epsilon(1e-9));

    const auto c = fit_decay(flat, t);
    CHECK(c.mu == 0.0);
    CHECK(c.R2 == 0.0);
    CHECK(c.no_decay);

    CHECK(fit_decay(noisy, t).mu == Approx(0.7).epsilon(0.05));

    std::vector<double> scaled;
    for (double e : E) scaled.push_back(9.0 * e);
    CHECK(fit_decay(scaled, t).mu == Approx(f.mu).epsilon(1e-12));

    CHECK_THROWS_AS(fit_decay(std::vector<double>(5, 1.0), grid_t(5, 1.0)), ConfigError);
    std::vector<double> dies = E;
    for (size_t i = 15; i < dies.size(); ++i) dies[i] = 0.0;
    CHECK_THROWS_AS(fit_decay(dies, t), ConfigError);
}

TEST_CASE("Rosier mode (1,1) is 1 - cos x", "[stability]") {
    const auto m = rosier_mode(2 * th::pi, {1, 1});
    CHECK(m.closed_form);
    CHECK(std::abs(m.lambda) == 0.0);
    for (double x : {0.0, 0.5, 2.0, 4.0, 2 * th::pi}) {
        CHECK(m.value(x).real() == Approx(1.0 - std::cos(x)).margin(1e-12));
        CHECK(m.value(x, 1).real() == Approx(std::sin(x)).margin(1e-12));
    }
    CHECK(m.value(0.0, 2).real() == Approx(1.0));
    // DERIVED: lambda z + z' + z''' = sin x - sin x
    for (double x : {0.3, 1.7, 5.1}) CHECK(std::abs(m.value(x, 1) + m.value(x, 3)) < 1e-12);
    CHECK_THROWS_AS(rosier_mode(1.0, {1, 1}), ConfigError);
}

TEST_CASE("general Rosier modes satisfy the boundary problem", "[stability]") {
    for (Witness kl : {Witness{1, 2}, Witness{2, 3}, Witness{1, 4}}) {
        const double l = critical_length(kl.first, kl.second);
        const auto m = rosier_mode(l, kl);
        INFO("k,l = " << kl.first << "," << kl.second << " lambda " << m.lambda);
        CHECK(m.residual <= 1e-8);
        CHECK(std::abs(m.lambda.real()) < 1e-12);
        // DERIVED: independent evaluation of the ODE and boundary values
        double scale = 0.0;
        for (int i = 0; i <= 40; ++i) scale = std::max(scale, std::abs(m.value(l * i / 40.0)));
        for (int i = 1; i < 40; ++i) {
            const double x = l * i / 40.0;
            CHECK(std::abs(m.lambda * m.value(x) + m.value(x, 1) + m.value(x, 3)) <= 1e-8 * scale);
        }
        CHECK(std::abs(m.value(0.0)) <= 1e-8 * scale);
        CHECK(std::abs(m.value(0.0, 1)) <= 1e-8 * scale);
        CHECK(std::abs(m.value(l)) <= 1e-8 * scale);
        CHECK(std::abs(m.value(l, 1)) <= 1e-8 * scale);
        CHECK(std::abs(m.value(0.0, 2) - 1.0) < 1e-10);
    }
}

TEST_CASE("critical network mode", "[stability]") {
    const auto cfg = th::critical();
    const Grid g = build_grid(cfg, std::vector<int>{128, 128, 21});
    const auto cm = build_critical_mode(cfg, g);
    CHECK(cm.edge1 == 0);
    CHECK(cm.edge2 == 1);
    for (int i = 1; i < g.M[0]; i += 7) {
        const double x = g.x(0, i);
        CHECK(cm.y(g.index(0, i)) == Approx(1.0 - std::cos(x)).margin(1e-12));
        CHECK(cm.y(g.index(1, i)) == Approx(-(1.0 - std::cos(x))).margin(1e-12));
    }
    for (int i = 1; i < g.M[2]; ++i) CHECK(cm.y(g.index(2, i)) == 0.0);
    CHECK(cm.y(0) == 0.0);
    // TRIVIAL: 1/2 * 2 * int (1 - cos)^2 = 3 pi
    CHECK(energy(g, cm.y) == Approx(3 * th::pi).epsilon(1e-10));
    CHECK(cm.junction_residual < 1e-2);

    CHECK_THROWS_AS(build_critical_mode(th::noncritical(), build_grid(th::noncritical(), 16.0)), RegimeError);
}

TEST_CASE("critical mode is discretely stationary", "[stability]") {
    const auto cfg = th::critical();
    double prev_in = 0.0, prev_all = 0.0;
    for (int m : {64, 128, 256}) {
        const Grid g = build_grid(cfg, std::vector<int>{m, m, m / 6});
        const Vec r = assemble_linear_operator(g, cfg).A * build_critical_mode(cfg, g).y;
        // first row off the junction is one-sided; the rest of the stencil is second order
        double in = 0.0;
        for (int j = 0; j < 2; ++j)
            for (int i = 3; i <= g.M[j] - 3; ++i) in = std::max(in, std::abs(r(g.index(j, i))));
        const double all = r.lpNorm<Eigen::Infinity>();
        if (prev_in > 0.0) {
            CHECK(prev_in / in > 3.5);
            CHECK(prev_all / all > 1.8);
        }
        prev_in = in;
        prev_all = all;
    }
}

TEST_CASE("random seeds and sine profiles", "[stability]") {
    const auto cfg = th::noncritical();
    const Grid g = build_grid(cfg, 64.0);
    const auto a = random_seeds(cfg, g, 3, 99, 0.5), b = random_seeds(cfg, g, 3, 99, 0.5);
    CHECK(a[2] == b[2]);
    CHECK(g.norm(a[0]) == Approx(0.5));
    CHECK((a[0] - a[1]).norm() > 0.0);
    // junction condition holds up to the stencil error, which shrinks with h
    const Grid g2 = build_grid(cfg, 128.0);
    const auto a2 = random_seeds(cfg, g2, 3, 99, 0.5);
    for (int k = 0; k < 3; ++k)
        CHECK(std::abs(junction_functional(g2, cfg, a2[k])) < 0.5 * std::abs(junction_functional(g, cfg, a[k])));
    // matches the independent closed form
    const th::SmoothField f(cfg, {0.3, -0.2, 0.9});
    const Vec s = sine_profile(cfg, g, {{0.3}, {-0.2}, {0.9}});
    CHECK((s - f.sample(g)).lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK_THROWS_AS(sine_profile(cfg, g, {{1.0}}), ConfigError);
}

TEST_CASE("damping profiles", "[stability]") {
    const auto cfg = th::critical();
    CHECK(default_damped_edges(cfg) == std::vector<int>{0});
    CHECK(default_damped_edges(th::noncritical()) == std::vector<int>{0, 1, 2});
    const Grid g = build_grid(cfg, std::vector<int>{96, 96, 16});
    const auto p = make_damping(cfg, g, {0}, 2.0);
    const double l = g.lengths[0], h = g.h[0];
    CHECK(p.x_lo[0] == Approx(l / 3));
    CHECK(p.x_hi[0] == Approx(2 * l / 3));
    for (int i = 0; i <= g.M[0]; ++i) {
        const double x = g.x(0, i);
        if (x >= l / 3 && x <= 2 * l / 3) CHECK(p.a[0](i) == Approx(2.0));
        if (x < l / 3 - 2 * h - 1e-12 || x > 2 * l / 3 + 2 * h + 1e-12) CHECK(p.a[0](i) == 0.0);
        CHECK(p.a[0](i) >= 0.0);
    }
    CHECK(p.a[1].norm() == 0.0);
    // DERIVED: <u, a u>_h >= c int_omega u^2
    Vec u = Vec::Ones(g.ndof);
    CHECK(g.inner(u, apply_damping(p, g, u)) >= 2.0 * (l / 3 - 2 * h));

    const auto all = make_damping(th::noncritical(), build_grid(th::noncritical(), 64.0), {0, 1, 2}, 1.0);
    CHECK(all.damped_edges.size() == 3);
    CHECK_THROWS_AS(make_damping(cfg, g, {}, 1.0), ConfigError);
    CHECK_THROWS_AS(make_damping(cfg, g, {0}, 0.0), ConfigError);
    CHECK_THROWS_AS(make_damping(cfg, g, {0}, 1.0, {{0.0, 1.0}}), ConfigError);
    CHECK_THROWS_AS(make_damping(cfg, g, {0}, 1.0, {{2.0, 1.0}}), ConfigError);
    CHECK_THROWS_AS(make_damping(cfg, g, {0}, 1.0, {{1.0, l}}), ConfigError);
}

TEST_CASE("decay campaigns", "[stability]") {
    const auto cfg = th::noncritical();
    const Grid g = build_grid(cfg, 32.0);
    SimOptions o;
    o.T = 10.0;
    o.dt = 1.0 / 64;
    o.stride = 100;
    const auto res = decay_campaign(cfg, g, o, random_seeds(cfg, g, 3, 4), 2);
    CHECK(res.decay_observed);
    CHECK(res.mu_min > 0.5);
    CHECK(res.mu_median >= res.mu_min);

    const auto ccfg = th::critical();
    const Grid cg = build_grid(ccfg, std::vector<int>{64, 64, 10});
    o.dt = 10.0 / std::ceil(10.0 / cg.h[0]);
    const auto crit = decay_campaign(ccfg, cg, o, {build_critical_mode(ccfg, cg).y});
    CHECK_FALSE(crit.decay_observed);
    CHECK(std::abs(crit.fits[0].mu) < 1e-4);
}
