#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crossdiff/energy.hpp"
#include "support/oracles.hpp"

using namespace crossdiff;

namespace {

ModelParams basic_params(double m, const Grid& g) {
    ModelParams p;
    p.m = m;
    p.potentials = {PotentialSpec::zero(g.left, g.right), PotentialSpec::zero(g.left, g.right)};
    p.masses = {0.5, 0.5};
    p.horizon = 1.0;
    p.tau = 0.1;
    p.n_steps = 10;
    return p;
}

}  // namespace

TEST_CASE("potential families evaluate and bound correctly") {
    PotentialSpec lin = PotentialSpec::linear(2.0, -1.0, 0.0, 1.0);
    CHECK(lin.value(0.5) == doctest::Approx(0.0));
    CHECK(lin.slope(0.3) == doctest::Approx(2.0));
    CHECK(lin.sup_norm() == doctest::Approx(1.0));
    CHECK(lin.slope_sup_norm() == doctest::Approx(2.0));

    PotentialSpec quad = PotentialSpec::quadratic(1.0, 0.0, 0.0, -1.0, 1.0);
    CHECK(quad.value(0.5) == doctest::Approx(0.25));
    CHECK(quad.slope(0.5) == doctest::Approx(1.0));
    CHECK(quad.curvature(0.0) == doctest::Approx(2.0));
    CHECK(quad.sup_norm() == doctest::Approx(1.0));

    PotentialSpec pw = PotentialSpec::piecewise_linear({0.0, 0.5, 1.0}, {1.0, 0.0, 2.0}, 0.0, 1.0);
    CHECK(pw.value(0.25) == doctest::Approx(0.5));
    CHECK(pw.value(0.75) == doctest::Approx(1.0));
    CHECK(pw.slope(0.25) == doctest::Approx(-2.0));
    CHECK(pw.slope(0.75) == doctest::Approx(4.0));
    CHECK(pw.sup_norm() == doctest::Approx(2.0));
    CHECK_THROWS_AS(PotentialSpec::piecewise_linear({0.0, 0.0}, {1.0, 1.0}, 0.0, 1.0),
                    std::invalid_argument);

    // Slope is the derivative of value to finite-difference tolerance.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    for (int rep = 0; rep < 50; ++rep) {
        const double x = uni(rng);
        const double fd = (quad.value(x + 1e-7) - quad.value(x - 1e-7)) / 2e-7;
        CHECK(std::abs(fd - quad.slope(x)) < 1e-6);
    }
}

TEST_CASE("internal energy values") {
    Grid g = build_grid(0.0, 1.0, 8);
    DensityField half(g, std::vector<double>(8, 0.5));
    DensityPair pair(half, half);

    ModelParams p2 = basic_params(2.0, g);
    CHECK(internal_energy(pair, p2) == doctest::Approx(1.0));

    ModelParams p3 = basic_params(3.0, g);
    CHECK(internal_energy(pair, p3) == doctest::Approx(0.5));

    ModelParams pinf = basic_params(ModelParams::infinite_m(), g);
    CHECK(internal_energy(pair, pinf) == doctest::Approx(0.0));
    std::vector<double> crowded(8, 0.5);
    crowded[3] = 0.7;  // total 1.2 > 1 on one cell
    DensityPair bad(DensityField(g, crowded), half);
    CHECK(std::isinf(internal_energy(bad, pinf)));
}

TEST_CASE("potential energy values and kappa weighting") {
    Grid g = build_grid(0.0, 1.0, 256);
    DensityField rho(g, std::vector<double>(256, 1.0));
    DensityField none = DensityField::zero(g);
    ModelParams p = basic_params(2.0, g);
    p.masses = {1.0, 0.0};
    p.potentials[0] = PotentialSpec::linear(1.0, 0.0, 0.0, 1.0);
    DensityPair pair(rho, none);
    CHECK(potential_energy(pair, p) == doctest::Approx(0.5).epsilon(1e-12));

    p.potentials[0] = PotentialSpec::zero(0.0, 1.0);
    CHECK(potential_energy(pair, p) == doctest::Approx(0.0));

    // Near-atomic mass at 0.5 under x^2: G close to 0.25.
    p.potentials[0] = PotentialSpec::quadratic(1.0, 0.0, 0.0, 0.0, 1.0);
    DensityField spike = DensityField::block(g, 0.5 - g.h, 0.5 + g.h, 1.0);
    CHECK(potential_energy(DensityPair(spike, none), p) == doctest::Approx(0.25).epsilon(1e-4));

    // kappa scales the drift term of the scheme energy.
    p.potentials[0] = PotentialSpec::linear(1.0, 0.0, 0.0, 1.0);
    p.kappa = {2.0, 1.0};
    CHECK(potential_energy(pair, p) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pressure law") {
    Grid g = build_grid(0.0, 1.0, 4);
    DensityField half(g, std::vector<double>(4, 0.5));
    DensityPair pair(half, half);
    PotentialField p2 = pressure_finite_m(pair, 2.0);
    for (int j = 0; j < 4; ++j) CHECK(p2.value(j) == doctest::Approx(2.0));

    DensityPair vac(DensityField::zero(g), DensityField::zero(g));
    PotentialField p0 = pressure_finite_m(vac, 2.0);
    for (int j = 0; j < 4; ++j) CHECK(p0.value(j) == doctest::Approx(0.0));

    DensityField quarter(g, std::vector<double>(4, 0.25));
    PotentialField p3 = pressure_finite_m(DensityPair(quarter, quarter), 3.0);
    for (int j = 0; j < 4; ++j) CHECK(p3.value(j) == doctest::Approx(0.375));

    CHECK_THROWS_AS(pressure_finite_m(pair, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(pressure_finite_m(pair, ModelParams::infinite_m()), std::invalid_argument);

    // The law sees the pair only through the total.
    std::mt19937_64 rng(17);
    Grid gr = build_grid(0.0, 1.0, 32);
    for (int rep = 0; rep < 10; ++rep) {
        DensityField a = oracle::random_field(gr, 0.4, rng);
        DensityField b = oracle::random_field(gr, 0.6, rng);
        PotentialField pab = pressure_finite_m(DensityPair(a, b), 2.5);
        PotentialField pba = pressure_finite_m(DensityPair(b, a), 2.5);
        for (int j = 0; j < 32; ++j) CHECK(pab.value(j) == doctest::Approx(pba.value(j)));
    }
}

TEST_CASE("internal energy is convex along linear interpolation") {
    std::mt19937_64 rng(23);
    Grid g = build_grid(0.0, 1.0, 32);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (double m : {1.5, 2.0, 3.0}) {
        ModelParams p = basic_params(m, g);
        for (int rep = 0; rep < 20; ++rep) {
            DensityPair a(oracle::random_field(g, 0.5, rng), oracle::random_field(g, 0.5, rng));
            DensityPair b(oracle::random_field(g, 0.5, rng), oracle::random_field(g, 0.5, rng));
            const double t = uni(rng);
            std::vector<double> v1(32), v2(32);
            for (int j = 0; j < 32; ++j) {
                v1[j] = (1 - t) * a.rho1.value(j) + t * b.rho1.value(j);
                v2[j] = (1 - t) * a.rho2.value(j) + t * b.rho2.value(j);
            }
            DensityPair mix(DensityField(g, v1), DensityField(g, v2));
            CHECK(internal_energy(mix, p) <=
                  (1 - t) * internal_energy(a, p) + t * internal_energy(b, p) + 1e-10);
        }
    }
}

TEST_CASE("single-species equilibrium against the closed form") {
    Grid g = build_grid(-1.0, 1.0, 512);
    ModelParams p;
    p.m = 2.0;
    p.potentials = {PotentialSpec::quadratic(1.0, 0.0, 0.0, -1.0, 1.0),
                    PotentialSpec::zero(-1.0, 1.0)};
    p.masses = {2.0 / 3.0, 0.0};
    p.horizon = 1.0;
    p.tau = 0.1;
    p.n_steps = 10;
    EquilibriumResult eq = equilibrium(p, g);
    CHECK(eq.constants[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(eq.pair.rho1.mass() == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
    double sup_err = 0.0;
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        const double exact = std::max(0.0, (1.0 - x * x) / 2.0);
        sup_err = std::max(sup_err, std::abs(eq.pair.rho1.value(j) - exact));
    }
    CHECK(sup_err < 1e-4);
    CHECK_FALSE(eq.degenerate);
}

TEST_CASE("two-species equilibrium with nested quadratic wells") {
    // Phi1 = x^2, Phi2 = 2 x^2: species 2 occupies a centered interval,
    // species 1 the adjacent outer region.
    Grid g = build_grid(-1.0, 1.0, 512);
    ModelParams p;
    p.m = 2.0;
    p.potentials = {PotentialSpec::quadratic(1.0, 0.0, 0.0, -1.0, 1.0),
                    PotentialSpec::quadratic(2.0, 0.0, 0.0, -1.0, 1.0)};
    p.masses = {0.3, 0.3};
    p.horizon = 1.0;
    p.tau = 0.1;
    p.n_steps = 10;
    EquilibriumResult eq = equilibrium(p, g);
    CHECK(eq.pair.rho1.mass() == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(eq.pair.rho2.mass() == doctest::Approx(0.3).epsilon(1e-8));
    // Species 2 is active iff C2 - 2x^2 >= C1 - x^2, i.e. |x| <= x* with
    // x*^2 = C2 - C1.
    const double xstar = std::sqrt(eq.constants[1] - eq.constants[0]);
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        if (std::abs(x) < xstar - g.h) CHECK(eq.pair.rho1.value(j) == 0.0);
        if (std::abs(x) > xstar + g.h) CHECK(eq.pair.rho2.value(j) == 0.0);
    }
    CHECK(eq.multi_component);  // species 1 occupies two symmetric intervals

    // First-order condition, pointwise, with the solved constants. The cells
    // carrying the species interface hold both phases and are excluded (their
    // residual is O(h) by construction on any finite grid).
    const double mm = p.m / (p.m - 1.0);
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        const double tot = eq.pair.total_at(j);
        const double lhs = mm * tot;
        const double a1 = eq.constants[0] - x * x;
        const double a2 = eq.constants[1] - 2.0 * x * x;
        const bool mixed = eq.pair.rho1.value(j) > 1e-8 && eq.pair.rho2.value(j) > 1e-8;
        if (mixed) continue;
        if (eq.pair.rho1.value(j) > 1e-8) CHECK(std::abs(lhs - a1) < 1e-6);
        if (eq.pair.rho2.value(j) > 1e-8) CHECK(std::abs(lhs - a2) < 1e-6);
        if (tot < 1e-12) CHECK(std::max({a1, a2, 0.0}) < 1e-6);
    }
}

TEST_CASE("degenerate equilibrium when potentials differ by a constant") {
    Grid g = build_grid(0.0, 1.0, 64);
    ModelParams p;
    p.m = 2.0;
    p.potentials = {PotentialSpec::quadratic(1.0, -1.0, 0.3, 0.0, 1.0),
                    PotentialSpec::quadratic(1.0, -1.0, 0.55, 0.0, 1.0)};
    p.masses = {0.2, 0.2};
    p.horizon = 1.0;
    p.tau = 0.1;
    p.n_steps = 10;
    EquilibriumResult eq = equilibrium(p, g);
    CHECK(eq.degenerate);
    CHECK(eq.pair.rho1.mass() + eq.pair.rho2.mass() == doctest::Approx(0.4).epsilon(1e-8));
}

TEST_CASE("model parameter validation") {
    Grid g = build_grid(0.0, 1.0, 16);
    ModelParams p = basic_params(2.0, g);
    CHECK_NOTHROW(p.validate(g));
    p.tau = 0.3;  // does not divide T = 1
    CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    p = basic_params(2.0, g);
    p.kappa = {0.0, 1.0};
    CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
    p = basic_params(ModelParams::infinite_m(), g);
    p.masses = {0.8, 0.4};  // M1 + M2 exceeds |Omega| = 1
    CHECK_THROWS_AS(p.validate(g), std::invalid_argument);
}
