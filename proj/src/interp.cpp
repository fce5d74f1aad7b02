#include "crossdiff/interp.hpp"

#include <cmath>
#include <stdexcept>

namespace crossdiff {

DensityField mccann_interpolate(const DensityField& rho_from, const DensityField& rho_to,
                                double t) {
    if (t < 0.0 || t > 1.0)
        throw std::invalid_argument("mccann_interpolate: t must lie in [0, 1]");
    TransportMap1D map = monotone_map(rho_from, rho_to);
    for (auto& sl : map.slabs) {
        sl.y0 = (1.0 - t) * sl.x0 + t * sl.y0;
        sl.y1 = (1.0 - t) * sl.x1 + t * sl.y1;
    }
    return pushforward(rho_from, map);
}

const DensityPair& piecewise_constant_sample(const Trajectory& traj, double t) {
    const double T = traj.params.horizon;
    if (t < 0.0 || t > T + 1e-12 * std::max(1.0, T))
        throw std::invalid_argument("piecewise_constant_sample: t outside [0, T]");
    const int N = traj.n_steps();
    int k = static_cast<int>(std::floor(t / traj.params.tau));
    if (k >= N) return traj.pairs.back();
    return traj.pairs[static_cast<std::size_t>(k + 1)];
}

VelocityField velocity_field(const JkoStepResult& step, const ModelParams& params, int species) {
    if (species != 0 && species != 1)
        throw std::invalid_argument("velocity_field: species must be 0 or 1");
    const Grid& g = step.pair.grid();
    const DensityField& rho = (species == 0) ? step.pair.rho1 : step.pair.rho2;
    const auto& disp = step.displacement[static_cast<std::size_t>(species)];
    VelocityField v{g, std::vector<double>(g.n_cells, 0.0),
                    std::vector<bool>(g.n_cells, false)};
    const double eps = 1e-8;
    for (int j = 0; j < g.n_cells; ++j) {
        if (rho.value(j) > eps) {
            v.values[j] = disp[j] / params.tau;
            v.defined[j] = true;
        }
    }
    return v;
}

MomentumField momentum(const DensityField& rho, const VelocityField& v) {
    if (!(rho.grid() == v.grid))
        throw std::invalid_argument("momentum: grid mismatch");
    MomentumField e{rho.grid(), std::vector<double>(rho.size(), 0.0)};
    for (int j = 0; j < rho.size(); ++j)
        if (v.defined[j]) e.values[j] = rho.value(j) * v.values[j];
    return e;
}

double bb_action(const Trajectory& traj, double t0, double t1) {
    if (!(t0 < t1) || t0 < 0.0 || t1 > traj.params.horizon + 1e-12)
        throw std::invalid_argument("bb_action: need 0 <= t0 < t1 <= T");
    const double tau = traj.params.tau;
    const Grid& g = traj.grid;
    double acc = 0.0;
    for (int k = 0; k < traj.n_steps(); ++k) {
        const double lo = std::max(t0, tau * k);
        const double hi = std::min(t1, tau * (k + 1));
        if (hi <= lo) continue;
        const JkoStepResult& step = traj.steps[static_cast<std::size_t>(k)];
        double kinetic = 0.0;
        for (int i = 0; i < 2; ++i) {
            const DensityField& rho = (i == 0) ? step.pair.rho1 : step.pair.rho2;
            if (rho.mass() <= 0.0) continue;
            const auto& disp = step.displacement[static_cast<std::size_t>(i)];
            for (int j = 0; j < g.n_cells; ++j) {
                const double v = disp[j] / tau;
                kinetic += rho.value(j) * v * v;
            }
        }
        acc += (hi - lo) * g.h * kinetic;
    }
    return acc;
}

}  // namespace crossdiff
