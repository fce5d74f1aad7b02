#pragma once

#include <vector>

#include "crossdiff/jko.hpp"
#include "crossdiff/measure.hpp"

namespace crossdiff {

/// Per-cell velocity, defined rho-a.e.; `defined[j]` is false on vacuum cells
/// (the stored value there is arbitrary).
struct VelocityField {
    Grid grid;
    std::vector<double> values;
    std::vector<bool> defined;
};

/// Per-cell momentum density E = rho * v, zero on vacuum cells.
struct MomentumField {
    Grid grid;
    std::vector<double> values;
};

/// Displacement interpolation: pushforward of rho_from along
/// (1-t) id + t T with T the monotone map onto rho_to.
DensityField mccann_interpolate(const DensityField& rho_from, const DensityField& rho_to,
                                double t);

/// Right-open piecewise-constant convention: t in [k tau, (k+1) tau) maps to
/// pairs[k+1]; t = T clamps to pairs[N].
const DensityPair& piecewise_constant_sample(const Trajectory& traj, double t);

/// Forward velocity of the step's minimizer, v = (x - T(x)) / tau from the
/// stored displacement; species index is 0 or 1.
VelocityField velocity_field(const JkoStepResult& step, const ModelParams& params, int species);

MomentumField momentum(const DensityField& rho, const VelocityField& v);

/// Sum over steps overlapping (t0, t1) of tau * h * sum_j v^2 rho (kinetic
/// action of the piecewise interpolation); partial steps enter with their
/// overlap fraction.
double bb_action(const Trajectory& traj, double t0, double t1);

}  // namespace crossdiff
