#include "helpers.hpp"

using namespace kdvstar;
using Catch::Approx;

TEST_CASE("build_config validates the standing assumptions", "[network]") {
    const auto cfg = build_config(3, {1, 2, 3}, 2.0);
    CHECK(cfg.L == 3.0);
    CHECK(cfg.margin() == Approx(0.5));
    CHECK_THROWS_AS(build_config(3, {1, 2, 3}, 1.5), ConfigError);
    CHECK_THROWS_WITH(build_config(3, {1, 2, 3}, 1.5), Catch::Matchers::ContainsSubstring("coupling not dissipative"));
    CHECK_NOTHROW(build_config(1, {2 * th::pi}, 1.0));
    CHECK_THROWS_AS(build_config(0, {}, 1.0), ConfigError);
    CHECK_THROWS_AS(build_config(2, {1.0, 0.0}, 2.0), ConfigError);
    CHECK_THROWS_AS(build_config(2, {1.0, -1.0}, 2.0), ConfigError);
    CHECK_THROWS_AS(build_config(2, {1.0}, 2.0), ConfigError);
    CHECK_THROWS_AS(build_config(1, {std::nan("")}, 2.0), ConfigError);
}

TEST_CASE("critical_length matches the closed form", "[network]") {
    // PAPER: k = l = 1 gives 2 pi; k^2 + l^2 + kl = 7 for (1,2)
    CHECK(critical_length(1, 1) == Approx(6.283185307).epsilon(1e-10));
    // 2 pi sqrt(7/3) = 9.5977240918..., the 9.597457 shorthand is off in the fourth decimal
    CHECK(critical_length(1, 2) == Approx(2 * th::pi * std::sqrt(7.0 / 3.0)).epsilon(1e-14));
    CHECK(critical_length(1, 2) == Approx(9.597724091862).epsilon(1e-12));
    CHECK(critical_length(2, 1) == critical_length(1, 2));
    CHECK_THROWS_AS(critical_length(0, 1), ConfigError);
    CHECK_THROWS_AS(critical_length(1, 0), ConfigError);
}

TEST_CASE("is_critical returns a witness within tolerance", "[network]") {
    const auto w = is_critical(2 * th::pi);
    REQUIRE(w);
    CHECK(*w == Witness{1, 1});
    CHECK_FALSE(is_critical(1.0));
    const double l12 = 2 * th::pi * std::sqrt(7.0 / 3.0);
    const auto w12 = is_critical(l12 + 5e-10);
    REQUIRE(w12);
    CHECK(std::abs(l12 - critical_length(w12->first, w12->second)) <= 1e-9);
    CHECK_FALSE(is_critical(l12 + 5e-9));
    CHECK(is_critical(l12 + 5e-9, 1e-8));
    CHECK_THROWS_AS(is_critical(1.0, 0.0), ConfigError);
}

TEST_CASE("is_critical agrees with brute-force enumeration", "[network]") {
    // DERIVED: enumeration over all ordered pairs, written independently
    Rng rng(5);
    for (int s = 0; s < 300; ++s) {
        double len = 50.0 * (rng.uniform() + 1.0) + 1e-3;
        if (s % 2) {
            const int k = 1 + s % 7, l = 1 + (s / 7) % 9;
            len = 2 * th::pi * std::sqrt((k * k + l * l + k * l) / 3.0) + (s % 3 - 1) * 4e-10;
        }
        bool brute = false;
        for (int k = 1; k <= 50; ++k)
            for (int l = 1; l <= 50; ++l)
                brute = brute || std::abs(len - 2 * th::pi * std::sqrt((k * k + l * l + k * l) / 3.0)) <= 1e-9;
        CHECK(brute == is_critical(len, 1e-9, 50).has_value());
    }
}

TEST_CASE("classify_network tags the regime", "[network]") {
    const auto rep = classify_network(th::critical());
    CHECK(rep.count == 2);
    CHECK(rep.regime == Regime::Critical);
    CHECK(rep.critical_edges() == std::vector<int>{0, 1});
    CHECK(rep.reduced_critical_edges() == std::vector<int>{0});
    REQUIRE(rep.witness[0]);
    CHECK_FALSE(rep.witness[2]);

    const auto one = classify_network(build_config(2, {1.0, 2.0}, 2.0));
    CHECK(one.count == 0);
    CHECK(one.regime == Regime::NonCritical);
    const auto single = classify_network(build_config(2, {2 * th::pi, 2.0}, 2.0));
    CHECK(single.count == 1);
    CHECK(single.regime == Regime::NonCritical);
    CHECK(std::string(regime_name(Regime::Critical)) == "Critical");
}
