#include "crossdiff/energy.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace crossdiff {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void ModelParams::validate(const Grid& grid) const {
    require(incompressible() || m > 1.0, "model.m must exceed 1 (or be \"infinity\")");
    require(kappa[0] > 0.0 && kappa[1] > 0.0, "model.kappa entries must be positive");
    require(masses[0] >= 0.0 && masses[1] >= 0.0 && masses[0] + masses[1] > 0.0,
            "model.masses must be nonnegative with positive sum");
    require(tau > 0.0, "model.tau must be positive");
    require(horizon >= 0.0, "model.T must be nonnegative");
    const double ratio = horizon / tau;
    require(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
            "model.tau must divide model.T (N = T/tau integer)");
    require(n_steps == static_cast<int>(std::llround(ratio)), "model.n_steps inconsistent with T/tau");
    if (incompressible())
        require(grid.length() > masses[0] + masses[1],
                "incompressible model requires |Omega| > M1 + M2");
}

double internal_energy(const DensityPair& pair, const ModelParams& params) {
    const Grid& g = pair.grid();
    if (params.incompressible()) {
        for (int j = 0; j < g.n_cells; ++j)
            if (pair.total_at(j) > 1.0 + kFeasTol)
                return std::numeric_limits<double>::infinity();
        return 0.0;
    }
    const double m = params.m;
    double acc = 0.0;
    for (int j = 0; j < g.n_cells; ++j) acc += std::pow(pair.total_at(j), m);
    return g.h * acc / (m - 1.0);
}

double potential_energy(const DensityPair& pair, const ModelParams& params) {
    const Grid& g = pair.grid();
    double acc = 0.0;
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        acc += params.weighted_potential(0, x) * pair.rho1.value(j) +
               params.weighted_potential(1, x) * pair.rho2.value(j);
    }
    return g.h * acc;
}

EnergyReport energy_report(const DensityPair& pair, const ModelParams& params) {
    EnergyReport rep;
    rep.internal = internal_energy(pair, params);
    rep.potential = potential_energy(pair, params);
    rep.feasible = std::isfinite(rep.internal);
    rep.total = rep.feasible ? rep.internal + rep.potential
                             : std::numeric_limits<double>::infinity();
    return rep;
}

PotentialField pressure_finite_m(const DensityPair& pair, double m) {
    require(std::isfinite(m) && m > 1.0, "pressure_finite_m: exponent must be finite and > 1");
    const Grid& g = pair.grid();
    std::vector<double> p(g.n_cells);
    const double c = m / (m - 1.0);
    for (int j = 0; j < g.n_cells; ++j) p[j] = c * std::pow(pair.total_at(j), m - 1.0);
    return PotentialField(g, std::move(p));
}

namespace {

struct EquilibriumTable {
    std::vector<double> total;
    std::vector<double> frac2;  // fraction of the cell attributed to species 2
    double mass1 = 0.0;
    double mass2 = 0.0;
};

/// Total density from the active max; cells crossed by the active-set tie are
/// split fractionally at the within-cell root of (c1 - Phi1) - (c2 - Phi2),
/// which keeps the species masses continuous in (c1, c2).
EquilibriumTable evaluate_equilibrium(const ModelParams& params, const Grid& g, double c1,
                                      double c2) {
    const double m = params.m;
    const bool has1 = params.species_active(0);
    const bool has2 = params.species_active(1);
    EquilibriumTable t;
    t.total.assign(g.n_cells, 0.0);
    t.frac2.assign(g.n_cells, 0.0);
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        const double a1 = has1 ? c1 - params.potentials[0].value(x)
                               : -std::numeric_limits<double>::infinity();
        const double a2 = has2 ? c2 - params.potentials[1].value(x)
                               : -std::numeric_limits<double>::infinity();
        const double top = std::max({a1, a2, 0.0});
        if (top <= 0.0) continue;
        const double tot = std::pow((m - 1.0) / m * top, 1.0 / (m - 1.0));
        t.total[j] = tot;
        double f2;
        if (!has2) {
            f2 = 0.0;
        } else if (!has1) {
            f2 = 1.0;
        } else {
            const double xl = g.x_edge(j);
            const double xr = g.x_edge(j + 1);
            auto diff = [&](double xx) {
                return (c1 - params.potentials[0].value(xx)) -
                       (c2 - params.potentials[1].value(xx));
            };
            const double dl = diff(xl);
            const double dr = diff(xr);
            if (dl > 0.0 && dr > 0.0)
                f2 = 0.0;
            else if (dl <= 0.0 && dr <= 0.0)
                f2 = 1.0;
            else {
                const double root = xl + (0.0 - dl) / (dr - dl) * (xr - xl);
                const double left_len = std::clamp(root - xl, 0.0, xr - xl);
                // Species 2 owns the side where the difference is <= 0.
                f2 = (dl <= 0.0) ? left_len / (xr - xl) : 1.0 - left_len / (xr - xl);
            }
        }
        t.frac2[j] = f2;
        t.mass1 += g.h * tot * (1.0 - f2);
        t.mass2 += g.h * tot * f2;
    }
    return t;
}

double bisect(double lo, double hi, const std::function<double(double)>& f) {
    double flo = f(lo);
    double fhi = f(hi);
    int expand = 0;
    while (flo > 0.0 && expand < 200) {
        hi = lo;
        lo -= std::max(1.0, std::abs(lo));
        flo = f(lo);
        ++expand;
    }
    while (fhi < 0.0 && expand < 200) {
        lo = hi;
        hi += std::max(1.0, std::abs(hi));
        fhi = f(hi);
        ++expand;
    }
    if (flo > 0.0 || fhi < 0.0)
        throw std::runtime_error("equilibrium: bisection bracket not found (mass not attainable)");
    for (int it = 0; it < 120; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

EquilibriumResult equilibrium(const ModelParams& params, const Grid& grid) {
    require(!params.incompressible(), "equilibrium: requires finite m");
    require(params.m > 1.0, "equilibrium: m must exceed 1");
    const double m1 = params.masses[0];
    const double m2 = params.masses[1];

    const double phi1_min = [&] {
        double v = std::numeric_limits<double>::infinity();
        for (int j = 0; j < grid.n_cells; ++j)
            v = std::min(v, params.potentials[0].value(grid.x_center(j)));
        return v;
    }();
    const double phi2_min = [&] {
        double v = std::numeric_limits<double>::infinity();
        for (int j = 0; j < grid.n_cells; ++j)
            v = std::min(v, params.potentials[1].value(grid.x_center(j)));
        return v;
    }();

    double c1 = -std::numeric_limits<double>::infinity();
    double c2 = -std::numeric_limits<double>::infinity();

    // Potentials differing by a constant leave the species split free: solve
    // the one-constant total problem and split by the mass ratio.
    if (m1 > 0.0 && m2 > 0.0) {
        double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
        for (int j = 0; j < grid.n_cells; ++j) {
            const double x = grid.x_center(j);
            const double d = params.potentials[1].value(x) - params.potentials[0].value(x);
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        if (dmax - dmin <= 1e-12 * (1.0 + std::abs(dmax))) {
            const double shift = 0.5 * (dmin + dmax);
            c1 = bisect(phi1_min, phi1_min + 1.0, [&](double c) {
                return evaluate_equilibrium(params, grid, c, c + shift).mass1 +
                       evaluate_equilibrium(params, grid, c, c + shift).mass2 - m1 - m2;
            });
            c2 = c1 + shift;
            EquilibriumTable t = evaluate_equilibrium(params, grid, c1, c2);
            const double f2 = m2 / (m1 + m2);
            std::vector<double> v1(grid.n_cells, 0.0), v2(grid.n_cells, 0.0);
            for (int j = 0; j < grid.n_cells; ++j) {
                v1[j] = t.total[j] * (1.0 - f2);
                v2[j] = t.total[j] * f2;
            }
            EquilibriumResult res{DensityPair(DensityField(grid, std::move(v1)),
                                              DensityField(grid, std::move(v2))),
                                  {c1, c2},
                                  true,
                                  false};
            int runs = 0;
            bool in_run = false;
            for (int j = 0; j < grid.n_cells; ++j) {
                const bool pos = t.total[j] > 0.0;
                if (pos && !in_run) ++runs;
                in_run = pos;
            }
            res.multi_component = runs > 1;
            return res;
        }
    }

    auto solve_c2 = [&](double c1_fixed) {
        return bisect(phi2_min, phi2_min + 1.0, [&](double c) {
            return evaluate_equilibrium(params, grid, c1_fixed, c).mass2 - m2;
        });
    };

    if (m1 > 0.0 && m2 > 0.0) {
        c1 = bisect(phi1_min, phi1_min + 1.0, [&](double c) {
            const double cc2 = solve_c2(c);
            return evaluate_equilibrium(params, grid, c, cc2).mass1 - m1;
        });
        c2 = solve_c2(c1);
    } else if (m1 > 0.0) {
        c1 = bisect(phi1_min, phi1_min + 1.0, [&](double c) {
            return evaluate_equilibrium(params, grid, c, c2).mass1 - m1;
        });
    } else {
        c2 = solve_c2(c1);
    }

    EquilibriumTable t = evaluate_equilibrium(params, grid, c1, c2);

    // Exact-tie configurations (Phi2 = Phi1 + const) leave the species split
    // indeterminate: fix the masses by redistributing within tied cells.
    bool degenerate = false;
    if (m1 > 0.0 && m2 > 0.0) {
        int ties = 0;
        for (int j = 0; j < grid.n_cells; ++j) {
            if (t.total[j] <= 0.0) continue;
            const double a1 = c1 - params.potentials[0].value(grid.x_center(j));
            const double a2 = c2 - params.potentials[1].value(grid.x_center(j));
            if (std::abs(a1 - a2) <= 1e-9 * (1.0 + std::abs(a1))) ++ties;
        }
        degenerate = ties > 1;
        double deficit2 = m2 - t.mass2;
        if (std::abs(deficit2) > 1e-12 * (m1 + m2)) {
            for (int j = 0; j < grid.n_cells && std::abs(deficit2) > 1e-14 * (m1 + m2); ++j) {
                if (t.total[j] <= 0.0) continue;
                const double a1 = c1 - params.potentials[0].value(grid.x_center(j));
                const double a2 = c2 - params.potentials[1].value(grid.x_center(j));
                if (std::abs(a1 - a2) > 1e-9 * (1.0 + std::abs(a1))) continue;
                const double cell_mass = grid.h * t.total[j];
                const double have2 = cell_mass * t.frac2[j];
                const double delta =
                    std::clamp(deficit2, -have2, cell_mass - have2);
                t.frac2[j] += delta / cell_mass;
                deficit2 -= delta;
            }
            if (std::abs(deficit2) > 1e-9 * (m1 + m2))
                throw std::runtime_error(
                    "equilibrium: species masses not attainable at the solved constants");
        }
    }

    std::vector<double> v1(grid.n_cells, 0.0), v2(grid.n_cells, 0.0);
    for (int j = 0; j < grid.n_cells; ++j) {
        v1[j] = t.total[j] * (1.0 - t.frac2[j]);
        v2[j] = t.total[j] * t.frac2[j];
    }
    EquilibriumResult res{DensityPair(DensityField(grid, std::move(v1)),
                                      DensityField(grid, std::move(v2))),
                          {c1, c2},
                          degenerate,
                          false};
    // The constants may vary per connected component of each species' support.
    for (const auto* vv : {&res.pair.rho1, &res.pair.rho2}) {
        int runs = 0;
        bool in_run = false;
        for (int j = 0; j < grid.n_cells; ++j) {
            const bool pos = vv->value(j) > 0.0;
            if (pos && !in_run) ++runs;
            in_run = pos;
        }
        if (runs > 1) res.multi_component = true;
    }
    return res;
}

}  // namespace crossdiff
