#pragma once

#include <array>
#include <string>
#include <vector>

#include "crossdiff/interp.hpp"
#include "crossdiff/jko.hpp"

namespace crossdiff {

/// Default threshold deciding that a cell belongs to a saturated patch.
inline constexpr double kEpsPatch = 1e-3;

struct SupportInterval {
    double inf_support = 0.0;          // leftmost qualifying cell center
    double sup_support = 0.0;          // rightmost qualifying cell center
    double total_support_length = 0.0; // h * #qualifying cells
    bool empty = true;
};

struct OrderingReport {
    bool ordered = true;
    double gap = 0.0;  // inf_support(rho1) - sup_support(rho2)
    bool vacuous = false;
};

struct BoundReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool satisfied = true;
    double margin = 0.0;  // rhs - lhs
};

double overlap_measure(const DensityPair& pair, double eps);
SupportInterval support_interval(const DensityField& rho, double eps);
OrderingReport ordering_check(const DensityPair& pair, double eps);

/// Explicit-constant estimates from the a-priori theory, evaluated on a run:
/// dissipation, L^m bound, metric sum, discrete H^1 seminorm and derived L^2
/// bounds. The Poincare constant of the interval is (right-left)/pi.
std::vector<BoundReport> check_apriori_bounds(const Trajectory& traj);

/// h * sum |p (1 - rho1 - rho2)|.
double complementarity_residual(const DensityPair& pair, const PotentialField& p);

/// h * #cells with total > 1 + delta.
double saturation_tail(const DensityField& total, double delta);

/// h * sum over {rho > eps} of |rho - 1|; zero iff indicator on its support.
double patch_deviation(const DensityField& rho, double eps);

/// Separable space-time test function: (sum_p c_p t^p) * cos(k pi (x-left)/L).
/// The cosine factor has vanishing slope at both walls.
struct TestFunction {
    std::vector<double> time_coeffs{1.0};
    int wavenumber = 0;

    double value(double t, double x, const Grid& g) const;
    double dt(double t, double x, const Grid& g) const;
    double dx(double t, double x, const Grid& g) const;
};

/// Residual of the weak continuity identity over (s, t) per species, assembled
/// from the piecewise-constant interpolation by trapezoid rule in time.
std::array<double, 2> weak_form_residual(const Trajectory& traj, const TestFunction& test,
                                         double s, double t);

bool ratio_preservation_check(const DensityPair& before, const DensityPair& after, double r,
                              double eps, double tol);

struct InterfaceStepReport {
    int step = 0;           // state index k+1 of the trajectory
    bool patch_ok = false;  // both active species present as near-saturated runs
    std::array<double, 2> left_endpoint{0.0, 0.0};
    std::array<double, 2> right_endpoint{0.0, 0.0};
    std::array<bool, 2> present{false, false};
    /// |V - nu_x (-dp - dPhi)| at each endpoint (NaN when not measurable).
    std::array<double, 2> law_residual_left;
    std::array<double, 2> law_residual_right;
    /// Two-sided flux mismatch at a shared saturated contact (NaN if none).
    double flux_match_residual;
};

/// Endpoint tracks, normal velocities and interface-law residuals for
/// incompressible segregated patch runs.
std::vector<InterfaceStepReport> interface_report(const Trajectory& traj);

struct TauRefinementRow {
    double tau_coarse = 0.0;
    double tau_fine = 0.0;
    double sup_w2 = 0.0;  // sup over shared nodes of product W2 between levels
};

struct TauRefinementStudy {
    std::vector<TauRefinementRow> rows;
    std::vector<double> contraction;     // consecutive sup_w2 ratios
    std::vector<double> explicit_gap;    // per level, vs the explicit predictor
    double explicit_order = 0.0;         // slope fit of log(gap) against log(tau)
};

TauRefinementStudy tau_refinement_study(const DensityPair& initial, const ModelParams& params,
                                        int levels, const SolverConfig& solver);

struct MSweepRow {
    double m = 0.0;  // infinity for the constrained run
    double tail_005 = 0.0;
    double tail_010 = 0.0;
    double w2_final_to_inf = 0.0;
    double pressure_gap = 0.0;  // sup over the saturated set at final time
    double max_complementarity = 0.0;  // m = inf row only
};

std::vector<MSweepRow> m_sweep_study(const DensityPair& initial, const ModelParams& params,
                                     const std::vector<double>& m_list,
                                     const SolverConfig& solver);

}  // namespace crossdiff
