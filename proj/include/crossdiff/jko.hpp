#pragma once

#include <array>
#include <string>
#include <vector>

#include "crossdiff/energy.hpp"
#include "crossdiff/measure.hpp"

namespace crossdiff {

struct SolverConfig {
    double inner_tol = 1e-6;
    int max_inner = 40000;
    std::string step_rule = "backtracking";
    double support_floor = 1e-8;  // eps_supp for support detection

    void validate() const;
};

struct JkoStepResult {
    DensityPair pair;
    /// Kantorovich potentials of the transport of pair onto prev, phi(left)=0,
    /// sampled at cell centers.
    std::array<PotentialField, 2> potentials;
    /// Exact per-cell averages of the potentials (discrete metric gradient).
    std::array<std::vector<double>, 2> phi_cellavg;
    /// x - T(x) at cell centers; meaningful on the species' support only.
    std::array<std::vector<double>, 2> displacement;
    std::array<double, 2> w2sq{0.0, 0.0};
    /// Sup-norm residual of the first-order condition (finite m) or the
    /// complementarity system (m = infinity).
    double optimality_residual = 0.0;
    std::array<double, 2> constants{0.0, 0.0};  // fitted C_i
    int inner_iterations = 0;
    bool converged = true;
    /// Pressure law (finite m) or the recovered constrained pressure (m = inf).
    PotentialField pressure;
    double complementarity = 0.0;  // h * sum |p (1 - rho1 - rho2)|, m = inf only
};

JkoStepResult jko_step(const DensityPair& prev, const ModelParams& params,
                       const SolverConfig& solver);
/// The optional pressure warm-starts the explicit predictor (the previous
/// step's recovered pressure when marching a trajectory).
JkoStepResult jko_step_incompressible(const DensityPair& prev, const ModelParams& params,
                                      const SolverConfig& solver,
                                      const PotentialField* warm_pressure = nullptr);

/// Explicit predictor: pushforward of each species by id + tau * v with
/// v = -kappa_i m/(m-1) d/dx (total)^(m-1) - Phi_i' (finite m) or
/// v = -kappa_i dp/dx - Phi_i' with a supplied pressure (m = inf).
DensityPair explicit_transport_step(const DensityPair& prev, const ModelParams& params,
                                    const PotentialField* pressure = nullptr);

/// Pressure of an incompressible step from its Kantorovich potentials,
/// p = (kappa_i C_i - Phi_i - phi_i/tau)+ on the species supports, 0 outside.
PotentialField recover_pressure_incompressible(const JkoStepResult& step,
                                               const ModelParams& params);

struct Trajectory {
    ModelParams params;
    Grid grid;
    std::vector<DensityPair> pairs;       // N + 1 states
    std::vector<JkoStepResult> steps;     // N results, steps[k]: pairs[k] -> pairs[k+1]
    std::vector<EnergyReport> energies;   // N + 1 reports, one per state
    std::vector<int> failed_steps;        // indices of non-converged steps

    int n_steps() const { return static_cast<int>(steps.size()); }
    double time_of(int k) const { return params.tau * k; }
};

Trajectory run_trajectory(const DensityPair& initial, const ModelParams& params,
                          const SolverConfig& solver);

}  // namespace crossdiff
