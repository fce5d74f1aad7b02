#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crossdiff/measure.hpp"
#include "support/oracles.hpp"

using namespace crossdiff;

namespace {

DensityField smooth_field(const Grid& g, double mass, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const double a1 = uni(rng), a2 = uni(rng), a3 = uni(rng);
    std::vector<double> v(g.n_cells);
    double sum = 0.0;
    for (int j = 0; j < g.n_cells; ++j) {
        const double t = (g.x_center(j) - g.left) / g.length();
        v[j] = 1.2 + a1 * std::sin(2 * M_PI * t) + a2 * std::cos(4 * M_PI * t) * 0.5 +
               a3 * std::sin(6 * M_PI * t) * 0.2;
        sum += v[j];
    }
    for (double& x : v) x *= mass / (g.h * sum);
    return DensityField(g, std::move(v));
}

}  // namespace

TEST_CASE("build_grid basics") {
    Grid g = build_grid(0.0, 1.0, 4);
    CHECK(g.h == doctest::Approx(0.25));
    CHECK(g.x_center(0) == doctest::Approx(0.125));
    CHECK(g.x_center(3) == doctest::Approx(0.875));
    Grid g2 = build_grid(-1.0, 1.0, 2);
    CHECK(g2.h == doctest::Approx(1.0));
    CHECK(g2.x_center(0) == doctest::Approx(-0.5));
    CHECK(g2.x_center(1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(build_grid(1.0, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(0.0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(0.0, std::nan(""), 4), std::invalid_argument);
}

TEST_CASE("density field validation") {
    Grid g = build_grid(0.0, 1.0, 2);
    CHECK_THROWS_AS(DensityField(g, {1.0, -0.5}), std::invalid_argument);
    CHECK_THROWS_AS(DensityField(g, {1.0, 1.0}, 2.0), std::invalid_argument);
    DensityField ok(g, {1.0, 1.0}, 1.0);
    CHECK(ok.mass() == doctest::Approx(1.0));
}

TEST_CASE("cdf of simple fields") {
    Grid g = build_grid(0.0, 1.0, 4);
    DensityField rho(g, {1.0, 1.0, 1.0, 1.0});
    CdfFunction F = cdf(rho);
    CHECK(F.evaluate(0.5) == doctest::Approx(0.5));
    CHECK(F.at_edge(0) == 0.0);
    CHECK(F.mass() == doctest::Approx(1.0));

    Grid g2 = build_grid(0.0, 1.0, 2);
    DensityField front(g2, {2.0, 0.0});
    CdfFunction F2 = cdf(front);
    CHECK(F2.evaluate(0.5) == doctest::Approx(1.0));
    CHECK(F2.evaluate(1.0) == doctest::Approx(1.0));

    CHECK_THROWS_AS(cdf(DensityField::zero(g)), std::invalid_argument);
}

TEST_CASE("quantile conventions") {
    Grid g = build_grid(0.0, 1.0, 4);
    DensityField rho(g, {1.0, 1.0, 1.0, 1.0});
    CHECK(quantile(rho, 0.25) == doctest::Approx(0.25));

    Grid g2 = build_grid(0.0, 1.0, 2);
    DensityField front(g2, {2.0, 0.0});
    CHECK(quantile(front, 0.5) == doctest::Approx(0.25));
    // s = mass lands on the right end of the support, not the domain.
    CHECK(quantile(front, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(quantile(front, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(quantile(front, 1.1), std::invalid_argument);

    // Gap in the support: left-continuous inverse picks the leftmost point.
    DensityField gap(build_grid(0.0, 1.0, 4), {2.0, 0.0, 0.0, 2.0});
    CHECK(quantile(gap, 0.5) == doctest::Approx(0.25));
    CHECK(quantile(gap, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("w2 exact values") {
    Grid g = build_grid(0.0, 1.0, 2);
    DensityField rho(g, {1.0, 1.0});
    DensityField nu(g, {2.0, 0.0});
    CHECK(w2_distance(rho, rho) == doctest::Approx(0.0));
    const double w2sq = w2_squared(rho, nu);
    CHECK(w2sq == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(oracle::w2sq_parcels(rho, nu) == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(oracle::w2sq_lp(rho, nu) == doctest::Approx(1.0 / 12.0).epsilon(1e-10));

    // Pure translation of a block by 0.5.
    Grid gl = build_grid(0.0, 1.0, 8);
    DensityField a = DensityField::block(gl, 0.0, 0.5, 1.0);
    DensityField b = DensityField::block(gl, 0.5, 1.0, 1.0);
    CHECK(w2_distance(a, b) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(w2_distance(rho, DensityField(g, {4.0, 0.0})), std::invalid_argument);
}

TEST_CASE("monotone map composition") {
    Grid g = build_grid(0.0, 1.0, 2);
    DensityField rho(g, {1.0, 1.0});
    DensityField nu(g, {2.0, 0.0});
    TransportMap1D map = monotone_map(rho, nu);
    map.validate();
    // T(x) = x/2 on [0, 1].
    CHECK(map.apply(0.2) == doctest::Approx(0.1));
    CHECK(map.apply(0.9) == doctest::Approx(0.45));

    TransportMap1D id_map = monotone_map(rho, rho);
    CHECK(id_map.apply(0.3) == doctest::Approx(0.3));

    Grid gl = build_grid(0.0, 2.0, 16);
    DensityField a = DensityField::block(gl, 0.25, 0.75, 1.0);
    DensityField b = DensityField::block(gl, 1.0, 1.5, 1.0);
    TransportMap1D shift = monotone_map(a, b);
    CHECK(shift.apply(0.5) == doctest::Approx(1.25));
}

TEST_CASE("kantorovich potential closed forms") {
    Grid g = build_grid(0.0, 1.0, 64);
    DensityField rho(g, std::vector<double>(64, 1.0));
    PotentialField self = kantorovich_potential(rho, rho);
    for (int j = 0; j < 64; ++j) CHECK(std::abs(self.value(j)) < 1e-14);

    // Translation by 0.5: phi' = -0.5 on the support of rho.
    Grid gl = build_grid(0.0, 2.0, 64);
    DensityField a = DensityField::block(gl, 0.0, 0.5, 1.0);
    DensityField b = DensityField::block(gl, 0.5, 1.0, 1.0);
    PotentialField phi = kantorovich_potential(a, b);
    for (int j = 0; j < 16; ++j)  // cells covering [0, 0.5]
        CHECK(phi.value(j) == doctest::Approx(-0.5 * (gl.x_center(j) - 0.0)).epsilon(1e-10));

    // rho=(1,1) onto nu=(2,0): phi(x) = x^2/4.
    Grid g2 = build_grid(0.0, 1.0, 2);
    DensityField r2(g2, {1.0, 1.0});
    DensityField n2(g2, {2.0, 0.0});
    PotentialField phi2 = kantorovich_potential(r2, n2);
    CHECK(phi2.value(0) == doctest::Approx(0.25 * 0.25 / 4.0).epsilon(1e-12));
    CHECK(phi2.value(1) == doctest::Approx(0.75 * 0.75 / 4.0).epsilon(1e-12));
}

TEST_CASE("pushforward deposition") {
    Grid g = build_grid(0.0, 1.0, 8);
    DensityField rho(g, std::vector<double>(8, 1.0));
    TransportMap1D id_map = monotone_map(rho, rho);
    DensityField same = pushforward(rho, id_map);
    for (int j = 0; j < 8; ++j) CHECK(same.value(j) == doctest::Approx(1.0).epsilon(1e-12));

    // Half-scaling map: uniform mass 1 on [0,1] lands as density 2 on [0, 1/2].
    Grid gu = build_grid(0.0, 1.0, 16);
    DensityField u(gu, std::vector<double>(16, 1.0));
    TransportMap1D half;
    half.source_mass = 1.0;
    half.slabs.push_back({0.0, 1.0, 0.0, 1.0, 0.0, 0.5});
    DensityField scaled = pushforward(u, half);
    for (int j = 0; j < 8; ++j) CHECK(scaled.value(j) == doctest::Approx(2.0).epsilon(1e-12));
    for (int j = 8; j < 16; ++j) CHECK(scaled.value(j) == doctest::Approx(0.0));

    // Non-monotone samples are rejected.
    TransportMap1D bad;
    bad.source_mass = 1.0;
    bad.slabs.push_back({0.0, 0.5, 0.0, 0.5, 0.8, 0.2});
    CHECK_THROWS_AS(pushforward(u, bad), std::invalid_argument);

    // Images leaving the domain pile up at the boundary cell.
    TransportMap1D out_left;
    out_left.source_mass = 1.0;
    out_left.slabs.push_back({0.0, 1.0, 0.0, 1.0, -0.5, 0.5});
    DensityField piled = pushforward(u, out_left);
    CHECK(piled.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(piled.value(0) > 2.0);  // half the mass lands in the first cell
}

TEST_CASE("w2 matches the LP oracle on random vacuum-bearing fields") {
    std::mt19937_64 rng(20240817);
    Grid g = build_grid(-0.5, 1.5, 24);
    for (int rep = 0; rep < 25; ++rep) {
        DensityField a = oracle::random_field(g, 0.7, rng);
        DensityField b = oracle::random_field(g, 0.7, rng);
        const double ours = w2_squared(a, b);
        const double lp = oracle::w2sq_lp(a, b);
        CHECK(ours == doctest::Approx(lp).epsilon(1e-9));
    }
}

TEST_CASE("property: symmetry and triangle inequality") {
    std::mt19937_64 rng(7);
    Grid g = build_grid(0.0, 1.0, 32);
    for (int rep = 0; rep < 40; ++rep) {
        DensityField a = oracle::random_field(g, 1.3, rng);
        DensityField b = oracle::random_field(g, 1.3, rng);
        DensityField c = oracle::random_field(g, 1.3, rng);
        const double ab = w2_distance(a, b);
        const double ba = w2_distance(b, a);
        CHECK(std::abs(ab - ba) <= 1e-12 * std::max(1.0, ab));
        CHECK(w2_distance(a, c) <= ab + w2_distance(b, c) + 1e-10);
    }
}

TEST_CASE("property: subadditivity under sums") {
    std::mt19937_64 rng(99);
    Grid g = build_grid(0.0, 1.0, 32);
    for (int rep = 0; rep < 40; ++rep) {
        DensityField m1 = oracle::random_field(g, 0.8, rng);
        DensityField n1 = oracle::random_field(g, 0.8, rng);
        DensityField m2 = oracle::random_field(g, 0.5, rng);
        DensityField n2 = oracle::random_field(g, 0.5, rng);
        std::vector<double> ms(32), ns(32);
        for (int j = 0; j < 32; ++j) {
            ms[j] = m1.value(j) + m2.value(j);
            ns[j] = n1.value(j) + n2.value(j);
        }
        const double lhs = w2_squared(DensityField(g, ms), DensityField(g, ns));
        CHECK(lhs <= w2_squared(m1, n1) + w2_squared(m2, n2) + 1e-10);
    }
}

TEST_CASE("property: map/distance consistency and pushforward mass") {
    std::mt19937_64 rng(3);
    Grid g = build_grid(0.0, 1.0, 256);
    for (int rep = 0; rep < 5; ++rep) {
        DensityField a = smooth_field(g, 1.0, rng);
        DensityField b = smooth_field(g, 1.0, rng);
        TransportMap1D map = monotone_map(a, b);
        double cost = 0.0;
        for (const auto& sl : map.slabs) {
            const double d0 = sl.x0 - sl.y0;
            const double d1 = sl.x1 - sl.y1;
            cost += (sl.s1 - sl.s0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
        }
        const double w = w2_squared(a, b);
        CHECK(cost == doctest::Approx(w).epsilon(1e-8));

        DensityField image = pushforward(a, map);
        CHECK(image.mass() == doctest::Approx(a.mass()).epsilon(1e-12));
        // The deposited image reproduces the target cellwise.
        double linf = 0.0;
        for (int j = 0; j < g.n_cells; ++j)
            linf = std::max(linf, std::abs(image.value(j) - b.value(j)));
        CHECK(linf < 1e-9);
    }
}

TEST_CASE("property: quantile inverts the cdf") {
    std::mt19937_64 rng(11);
    Grid g = build_grid(0.0, 1.0, 32);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        DensityField a = oracle::random_field(g, 1.0, rng);
        CdfFunction F = cdf(a);
        for (int t = 0; t < 10; ++t) {
            const double s = uni(rng) * a.mass();
            const double x = quantile(a, s);
            CHECK(F.evaluate(x) == doctest::Approx(s).epsilon(1e-10));
        }
    }
}
