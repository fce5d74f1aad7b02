#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include "crossdiff/measure.hpp"
#include "crossdiff/potential.hpp"

namespace crossdiff {

/// Absolute slack separating a true constraint violation from float noise in
/// the incompressible feasibility check max(rho1+rho2) <= 1.
inline constexpr double kFeasTol = 1e-9;

struct ModelParams {
    double m = 2.0;  // exponent in (1, inf); infinity() selects the constrained model
    std::array<double, 2> kappa{1.0, 1.0};
    std::array<PotentialSpec, 2> potentials{};
    std::array<double, 2> masses{1.0, 0.0};
    double horizon = 1.0;
    double tau = 0.1;
    int n_steps = 10;

    static double infinite_m() { return std::numeric_limits<double>::infinity(); }
    bool incompressible() const { return std::isinf(m); }
    bool species_active(int i) const { return masses[static_cast<std::size_t>(i)] > 0.0; }
    /// Potential entering the kappa-weighted scheme: Phi_i / kappa_i.
    double weighted_potential(int i, double x) const {
        return potentials[static_cast<std::size_t>(i)].value(x) / kappa[static_cast<std::size_t>(i)];
    }
    /// Checks exponents, weights, masses, the step/horizon pairing and, for
    /// the incompressible model, the structural condition |Omega| > M1 + M2.
    void validate(const Grid& grid) const;
};

struct EnergyReport {
    double internal = 0.0;   // +inf when the incompressible constraint is violated
    double potential = 0.0;  // kappa-weighted drift energy
    double total = 0.0;
    bool feasible = true;
};

/// Internal energy F_m (finite m) or the 0/+inf constraint indicator (m = inf).
double internal_energy(const DensityPair& pair, const ModelParams& params);
/// h * sum over cells of (Phi_1/k1 rho1 + Phi_2/k2 rho2) at cell centers.
double potential_energy(const DensityPair& pair, const ModelParams& params);
EnergyReport energy_report(const DensityPair& pair, const ModelParams& params);

/// p = m/(m-1) (rho1+rho2)^(m-1), per cell. Requires finite m > 1.
PotentialField pressure_finite_m(const DensityPair& pair, double m);

struct EquilibriumResult {
    DensityPair pair;
    std::array<double, 2> constants{0.0, 0.0};
    bool degenerate = false;        // active-set tie on more than one cell
    bool multi_component = false;   // support has more than one connected run
};

/// Steady state of F_m + G: total density ((m-1)/m max(C1-Phi1, C2-Phi2, 0))^{1/(m-1)}
/// with constants found by nested bisection on the species masses.
EquilibriumResult equilibrium(const ModelParams& params, const Grid& grid);

}  // namespace crossdiff
