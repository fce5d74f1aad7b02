#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crossdiff/jko.hpp"
#include "support/oracles.hpp"

using namespace crossdiff;

namespace {

ModelParams make_params(double m, const Grid& g, double tau, double T) {
    ModelParams p;
    p.m = m;
    p.potentials = {PotentialSpec::zero(g.left, g.right), PotentialSpec::zero(g.left, g.right)};
    p.horizon = T;
    p.tau = tau;
    p.n_steps = static_cast<int>(std::llround(T / tau));
    return p;
}

double objective_value(const DensityPair& state, const DensityPair& prev,
                       const ModelParams& params) {
    double acc = internal_energy(state, params) + potential_energy(state, params);
    if (state.rho1.mass() > 0.0)
        acc += w2_squared(state.rho1, prev.rho1) / (2.0 * params.tau * params.kappa[0]);
    if (state.rho2.mass() > 0.0)
        acc += w2_squared(state.rho2, prev.rho2) / (2.0 * params.tau * params.kappa[1]);
    return acc;
}

}  // namespace

TEST_CASE("equilibrium is a fixed point of its own step") {
    Grid g = build_grid(-1.0, 1.0, 128);
    ModelParams p = make_params(2.0, g, 0.05, 0.5);
    p.potentials[0] = PotentialSpec::quadratic(1.0, 0.0, 0.0, -1.0, 1.0);
    p.masses = {2.0 / 3.0, 0.0};
    DensityPair eq = equilibrium(p, g).pair;
    SolverConfig solver;
    solver.inner_tol = 1e-7;
    JkoStepResult res = jko_step(eq, p, solver);
    CHECK(res.converged);
    CHECK(pair_w2_distance(res.pair, eq) <= 10.0 * solver.inner_tol);
    CHECK(res.pair.rho1.mass() == doctest::Approx(eq.rho1.mass()).epsilon(1e-10));
}

TEST_CASE("jko step matches the exchange oracle (single species, no drift)") {
    Grid g = build_grid(0.0, 1.0, 16);
    ModelParams p = make_params(2.0, g, 0.05, 0.05);
    p.masses = {1.0, 0.0};
    DensityPair prev(DensityField::block(g, 0.0, 0.5, 1.0), DensityField::zero(g));
    SolverConfig solver;
    solver.inner_tol = 1e-9;
    JkoStepResult res = jko_step(prev, p, solver);
    CHECK(res.converged);
    DensityPair ours = res.pair;
    DensityPair oracle_min = oracle::exchange_minimize(prev, p);
    CHECK(pair_w2_distance(ours, oracle_min) <= 1e-4);
    // Optimality of the reported objective vs the previous iterate.
    CHECK(objective_value(ours, prev, p) <= objective_value(prev, prev, p) + 1e-12);
}

TEST_CASE("jko step decreases the free energy by at least the metric cost") {
    std::mt19937_64 rng(31);
    Grid g = build_grid(0.0, 1.0, 48);
    for (double m : {1.5, 3.0}) {
        ModelParams p = make_params(m, g, 0.02, 0.02);
        p.potentials[0] = PotentialSpec::linear(0.8, 0.0, 0.0, 1.0);
        p.potentials[1] = PotentialSpec::linear(1.4, 0.0, 0.0, 1.0);
        p.masses = {0.4, 0.3};
        DensityPair prev(oracle::random_field(g, 0.4, rng), oracle::random_field(g, 0.3, rng));
        SolverConfig solver;
        JkoStepResult res = jko_step(prev, p, solver);
        const double e_prev =
            internal_energy(prev, p) + potential_energy(prev, p);
        const double e_out =
            internal_energy(res.pair, p) + potential_energy(res.pair, p);
        const double metric = res.w2sq[0] / (2.0 * p.tau) + res.w2sq[1] / (2.0 * p.tau);
        CHECK(e_out + metric <= e_prev + 1e-9 * (1.0 + std::abs(e_prev)));
        CHECK(res.pair.rho1.mass() == doctest::Approx(0.4).epsilon(1e-10));
        CHECK(res.pair.rho2.mass() == doctest::Approx(0.3).epsilon(1e-10));
    }
}

TEST_CASE("kappa-weighted step matches the exchange oracle") {
    Grid g = build_grid(0.0, 1.0, 16);
    ModelParams p = make_params(2.0, g, 0.04, 0.04);
    p.masses = {0.6, 0.0};
    p.kappa = {2.5, 1.0};
    p.potentials[0] = PotentialSpec::linear(0.5, 0.0, 0.0, 1.0);
    DensityPair prev(DensityField::block(g, 0.3, 0.8, 0.6), DensityField::zero(g));
    SolverConfig solver;
    solver.inner_tol = 1e-9;
    JkoStepResult res = jko_step(prev, p, solver);
    CHECK(res.converged);
    DensityPair oracle_min = oracle::exchange_minimize(prev, p);
    CHECK(pair_w2_distance(res.pair, oracle_min) <= 1e-4);
}

TEST_CASE("explicit step: constant drift translates, no drift is identity") {
    Grid g = build_grid(0.0, 2.0, 64);
    ModelParams p = make_params(2.0, g, 0.05, 0.05);
    p.masses = {0.5, 0.5};
    p.potentials = {PotentialSpec::linear(1.0, 0.0, 0.0, 2.0),
                    PotentialSpec::linear(1.0, 0.0, 0.0, 2.0)};
    // Uniform total in the interior: pressure gradient vanishes there.
    DensityPair prev(DensityField::block(g, 0.5, 1.0, 0.5),
                     DensityField::block(g, 1.0, 1.5, 0.5));
    DensityPair out = explicit_transport_step(prev, p);
    // Both species translate left by tau * 1.
    DensityPair expected(DensityField::block(g, 0.45, 0.95, 0.5),
                         DensityField::block(g, 0.95, 1.45, 0.5));
    CHECK(pair_w2_distance(out, expected) < 2.0 * g.h);

    // No drift, species filling the whole domain uniformly: nothing moves.
    ModelParams p0 = make_params(2.0, g, 0.05, 0.05);
    p0.masses = {2.0, 0.0};
    DensityPair full(DensityField(g, std::vector<double>(64, 1.0)), DensityField::zero(g));
    DensityPair still = explicit_transport_step(full, p0);
    CHECK(pair_w2_distance(still, full) < 1e-12);
}

TEST_CASE("explicit step agrees with the implicit step to second order") {
    Grid g = build_grid(-1.0, 1.0, 256);
    std::vector<double> vals(256);
    for (int j = 0; j < 256; ++j) {
        const double x = g.x_center(j);
        vals[j] = std::max(0.0, 1.0 - 2.5 * x * x);
    }
    DensityField hump(g, vals);
    const double mass = hump.mass();
    SolverConfig solver;
    solver.inner_tol = 1e-10;
    std::vector<double> gaps;
    for (double tau : {0.01, 0.005, 0.0025}) {
        ModelParams p = make_params(2.0, g, tau, tau);
        p.masses = {mass, 0.0};
        DensityPair prev(hump, DensityField::zero(g));
        DensityPair ex = explicit_transport_step(prev, p);
        JkoStepResult im = jko_step(prev, p, solver);
        gaps.push_back(pair_w2_distance(ex, im.pair));
    }
    const double slope1 = std::log2(gaps[0] / gaps[1]);
    const double slope2 = std::log2(gaps[1] / gaps[2]);
    CHECK(0.5 * (slope1 + slope2) >= 1.8);
}

TEST_CASE("incompressible: saturated block with no drift is stationary") {
    Grid g = build_grid(0.0, 1.0, 64);
    ModelParams p = make_params(ModelParams::infinite_m(), g, 0.02, 0.02);
    p.masses = {0.4, 0.0};
    DensityPair prev(DensityField::block(g, 0.3, 0.7, 0.4), DensityField::zero(g));
    SolverConfig solver;
    JkoStepResult res = jko_step_incompressible(prev, p, solver);
    CHECK(res.converged);
    CHECK(pair_w2_distance(res.pair, prev) <= 2.0 * g.h);
    CHECK(res.complementarity <= solver.inner_tol);
}

TEST_CASE("incompressible: uncongested patch translates with the drift") {
    Grid g = build_grid(0.0, 1.0, 100);
    ModelParams p = make_params(ModelParams::infinite_m(), g, 0.05, 0.05);
    p.masses = {0.2, 0.0};
    p.potentials[0] = PotentialSpec::linear(1.0, 0.0, 0.0, 1.0);
    DensityPair prev(DensityField::block(g, 0.4, 0.6, 0.2), DensityField::zero(g));
    SolverConfig solver;
    JkoStepResult res = jko_step_incompressible(prev, p, solver);
    CHECK(res.converged);
    DensityPair expected(DensityField::block(g, 0.35, 0.55, 0.2), DensityField::zero(g));
    CHECK(pair_w2_distance(res.pair, expected) <= 2.0 * g.h);
}

TEST_CASE("incompressible step matches the constrained exchange oracle") {
    Grid g = build_grid(0.0, 1.0, 24);
    ModelParams p = make_params(ModelParams::infinite_m(), g, 0.08, 0.08);
    p.masses = {0.25, 0.3};
    p.potentials = {PotentialSpec::linear(1.0, 0.0, 0.0, 1.0),
                    PotentialSpec::linear(2.0, 0.0, 0.0, 1.0)};
    // Ordered patches pushed into each other against the left wall.
    DensityPair prev(DensityField::block(g, 0.45, 0.7, 0.25),
                     DensityField::block(g, 0.1, 0.4, 0.3));
    SolverConfig solver;
    solver.inner_tol = 1e-8;
    JkoStepResult res = jko_step_incompressible(prev, p, solver);
    CHECK(res.converged);
    DensityPair oracle_min = oracle::exchange_minimize(prev, p);
    CHECK(pair_w2_distance(res.pair, oracle_min) <= 5e-4);
    CHECK(res.complementarity <= solver.inner_tol);
    double max_tot = 0.0;
    for (int j = 0; j < g.n_cells; ++j) max_tot = std::max(max_tot, res.pair.total_at(j));
    CHECK(max_tot <= 1.0 + 1e-9);
    // Pressure is nonnegative and supported on the saturated set.
    for (int j = 0; j < g.n_cells; ++j) {
        CHECK(res.pressure.value(j) >= -1e-12);
        if (res.pressure.value(j) > 1e-6) CHECK(res.pair.total_at(j) > 1.0 - 1e-3);
    }
}

TEST_CASE("recovered pressure of a stationary wall block is a linear ramp") {
    Grid g = build_grid(0.0, 1.0, 128);
    ModelParams p = make_params(ModelParams::infinite_m(), g, 0.02, 0.02);
    p.masses = {0.4, 0.0};
    p.potentials[0] = PotentialSpec::linear(1.0, 0.0, 0.0, 1.0);
    // Already at the wall and fully saturated: the minimizer stays put.
    DensityPair prev(DensityField::block(g, 0.0, 0.4, 0.4), DensityField::zero(g));
    SolverConfig solver;
    JkoStepResult res = jko_step_incompressible(prev, p, solver);
    CHECK(res.converged);
    CHECK(pair_w2_distance(res.pair, prev) <= g.h);
    // Elliptic reference: -p'' = Phi'' = 0, p(0.4) = 0, p' = -1 inside.
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        const double expected = std::max(0.0, 0.4 - x);
        if (x < 0.38) CHECK(res.pressure.value(j) == doctest::Approx(expected).epsilon(0.05));
        if (x > 0.45) CHECK(res.pressure.value(j) == doctest::Approx(0.0).epsilon(1e-8));
    }
    PotentialField again = recover_pressure_incompressible(res, p);
    for (int j = 0; j < g.n_cells; ++j)
        CHECK(again.value(j) == doctest::Approx(res.pressure.value(j)).epsilon(1e-10));
}

TEST_CASE("trajectory bookkeeping and dissipation inequality") {
    Grid g = build_grid(0.0, 1.0, 128);
    ModelParams p = make_params(2.0, g, 0.02, 0.2);
    p.potentials = {PotentialSpec::linear(1.0, 0.0, 0.0, 1.0),
                    PotentialSpec::linear(2.0, 0.0, 0.0, 1.0)};
    p.masses = {0.25, 0.25};
    DensityPair initial(DensityField::block(g, 0.55, 0.9, 0.25),
                        DensityField::block(g, 0.15, 0.5, 0.25));
    SolverConfig solver;
    Trajectory traj = run_trajectory(initial, p, solver);
    CHECK(traj.n_steps() == 10);
    CHECK(traj.failed_steps.empty());
    CHECK(traj.pairs.size() == 11);
    // Sum of squared increments over 2 tau bounded by the energy drop.
    double diss = 0.0;
    for (const auto& st : traj.steps) diss += (st.w2sq[0] + st.w2sq[1]) / (2.0 * p.tau);
    CHECK(diss <= traj.energies.front().total - traj.energies.back().total + 10 * 1e-8);
    for (int k = 0; k < traj.n_steps(); ++k)
        CHECK(traj.energies[k + 1].total <=
              traj.energies[k].total + 1e-9 * (1.0 + std::abs(traj.energies[k].total)));

    // N = 0 trajectory holds the initial state only.
    ModelParams p0 = p;
    p0.horizon = 0.0;
    p0.n_steps = 0;
    Trajectory t0 = run_trajectory(initial, p0, solver);
    CHECK(t0.pairs.size() == 1);
}

TEST_CASE("solver configuration validation") {
    SolverConfig s;
    CHECK_NOTHROW(s.validate());
    s.inner_tol = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = SolverConfig{};
    s.step_rule = "fixed";
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = SolverConfig{};
    s.max_inner = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
