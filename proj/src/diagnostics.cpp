#include "crossdiff/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace crossdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double lm_norm_of_total(const DensityPair& pair, double m) {
    const Grid& g = pair.grid();
    double acc = 0.0;
    for (int j = 0; j < g.n_cells; ++j) acc += std::pow(pair.total_at(j), m);
    return std::pow(g.h * acc, 1.0 / m);
}

double max_total(const DensityPair& pair) {
    double v = 0.0;
    for (int j = 0; j < pair.grid().n_cells; ++j) v = std::max(v, pair.total_at(j));
    return v;
}

BoundReport make_report(std::string name, double lhs, double rhs) {
    BoundReport r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.margin = rhs - lhs;
    r.satisfied = lhs <= rhs + 1e-6 * std::max(1.0, std::abs(rhs));
    return r;
}

}  // namespace

double overlap_measure(const DensityPair& pair, double eps) {
    const Grid& g = pair.grid();
    int count = 0;
    for (int j = 0; j < g.n_cells; ++j)
        if (pair.rho1.value(j) > eps && pair.rho2.value(j) > eps) ++count;
    return g.h * count;
}

SupportInterval support_interval(const DensityField& rho, double eps) {
    SupportInterval si;
    const Grid& g = rho.grid();
    int count = 0;
    for (int j = 0; j < g.n_cells; ++j) {
        if (rho.value(j) > eps) {
            if (si.empty) {
                si.inf_support = g.x_center(j);
                si.empty = false;
            }
            si.sup_support = g.x_center(j);
            ++count;
        }
    }
    si.total_support_length = g.h * count;
    return si;
}

OrderingReport ordering_check(const DensityPair& pair, double eps) {
    OrderingReport rep;
    const SupportInterval s1 = support_interval(pair.rho1, eps);
    const SupportInterval s2 = support_interval(pair.rho2, eps);
    if (s1.empty || s2.empty) {
        rep.vacuous = true;
        return rep;
    }
    rep.gap = s1.inf_support - s2.sup_support;
    const double h = pair.grid().h;
    rep.ordered = s2.sup_support <= s1.inf_support + h * (1.0 + 1e-9);
    return rep;
}

std::vector<BoundReport> check_apriori_bounds(const Trajectory& traj) {
    const ModelParams& par = traj.params;
    const Grid& g = traj.grid;
    const int N = traj.n_steps();
    const double tau = par.tau;
    const double L = g.length();
    const double T = par.horizon;
    std::vector<BoundReport> out;

    std::array<double, 2> phi_sup{0.0, 0.0};
    std::array<double, 2> slope_sup{0.0, 0.0};
    for (int i = 0; i < 2; ++i) {
        phi_sup[i] = par.potentials[i].sup_norm() / par.kappa[i];
        slope_sup[i] = par.potentials[i].slope_sup_norm() / par.kappa[i];
    }
    const double mass_phi =
        par.masses[0] * phi_sup[0] + par.masses[1] * phi_sup[1];

    double diss_lhs = 0.0;
    double metric_lhs = 0.0;
    for (const auto& st : traj.steps) {
        for (int i = 0; i < 2; ++i) {
            diss_lhs += st.w2sq[i] / (2.0 * tau * par.kappa[i]);
            metric_lhs += st.w2sq[i] / (tau * par.kappa[i]);
        }
    }
    const double e0 = traj.energies.front().total;
    const double eN = traj.energies.back().total;
    out.push_back(make_report("dissipation_3.6", diss_lhs, e0 - eN + N * 1e-8));

    if (par.incompressible()) {
        double linf = 0.0;
        for (int k = 1; k <= N; ++k) linf = std::max(linf, max_total(traj.pairs[k]));
        out.push_back(make_report("linf_bound_3.7", linf, 1.0));
        out.push_back(make_report("metric_sum_3.9", metric_lhs, 4.0 * mass_phi));
        return out;
    }

    const double m = par.m;
    const double f0 = traj.energies.front().internal * (m - 1.0);  // ||tot_0||_m^m
    const double c1 = std::pow((2.0 * m - 2.0) * mass_phi + f0, 1.0 / m);
    double lm_max = 0.0;
    for (int k = 1; k <= N; ++k) lm_max = std::max(lm_max, lm_norm_of_total(traj.pairs[k], m));
    out.push_back(make_report("lm_bound_3.7", lm_max, c1));

    const double c2 = 2.0 / (m - 1.0) * f0 + 4.0 * mass_phi;
    out.push_back(make_report("metric_sum_3.9", metric_lhs, c2));

    // Discrete H^1 seminorm of (total)^(m-1/2) over the run.
    double h1 = 0.0;
    double l2 = 0.0;
    double lq2 = 0.0;
    for (int k = 1; k <= N; ++k) {
        const DensityPair& p = traj.pairs[k];
        double prev_w = std::pow(p.total_at(0), m - 0.5);
        double cell_sum = prev_w * prev_w;
        for (int j = 1; j < g.n_cells; ++j) {
            const double w = std::pow(p.total_at(j), m - 0.5);
            const double dw = (w - prev_w) / g.h;
            h1 += tau * g.h * dw * dw;
            cell_sum += w * w;
            prev_w = w;
        }
        l2 += tau * g.h * cell_sum;
        const double lm = lm_norm_of_total(p, m);
        lq2 += tau * lm * lm;
    }
    const double kmin = std::min(par.kappa[0], par.kappa[1]);
    const double slope_term =
        T * (par.masses[0] * slope_sup[0] * slope_sup[0] +
             par.masses[1] * slope_sup[1] * slope_sup[1]);
    const double c3 =
        std::numbers::sqrt2 * (m - 0.5) / m * std::sqrt(c2 / kmin + slope_term);
    out.push_back(make_report("h1_seminorm_3.10", std::sqrt(h1), c3));

    const double c_omega = L / std::numbers::pi;
    const double c4 = std::numbers::sqrt2 *
                      std::sqrt(c_omega * c_omega * c3 * c3 +
                                T * std::pow(c1, 2.0 * m - 1.0) * std::pow(L, 1.0 / m - 1.0));
    out.push_back(make_report("l2_norm_3.14", std::sqrt(l2), c4));

    const double c5 = std::sqrt(T) * c1;
    out.push_back(make_report("lq_lm_3.11_q2", std::sqrt(lq2), c5));
    return out;
}

double complementarity_residual(const DensityPair& pair, const PotentialField& p) {
    const Grid& g = pair.grid();
    double acc = 0.0;
    for (int j = 0; j < g.n_cells; ++j)
        acc += std::abs(p.value(j) * (1.0 - pair.total_at(j)));
    return g.h * acc;
}

double saturation_tail(const DensityField& total, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("saturation_tail: delta must be positive");
    int count = 0;
    for (double v : total.values())
        if (v > 1.0 + delta) ++count;
    return total.grid().h * count;
}

double patch_deviation(const DensityField& rho, double eps) {
    double acc = 0.0;
    for (double v : rho.values())
        if (v > eps) acc += std::abs(v - 1.0);
    return rho.grid().h * acc;
}

double TestFunction::value(double t, double x, const Grid& g) const {
    double tp = 0.0;
    for (std::size_t p = time_coeffs.size(); p-- > 0;) tp = tp * t + time_coeffs[p];
    const double arg = wavenumber * std::numbers::pi * (x - g.left) / g.length();
    return tp * std::cos(arg);
}

double TestFunction::dt(double t, double x, const Grid& g) const {
    double tp = 0.0;
    for (std::size_t p = time_coeffs.size(); p-- > 1;)
        tp = tp * t + time_coeffs[p] * static_cast<double>(p);
    const double arg = wavenumber * std::numbers::pi * (x - g.left) / g.length();
    return tp * std::cos(arg);
}

double TestFunction::dx(double t, double x, const Grid& g) const {
    double tp = 0.0;
    for (std::size_t p = time_coeffs.size(); p-- > 0;) tp = tp * t + time_coeffs[p];
    const double w = wavenumber * std::numbers::pi / g.length();
    const double arg = wavenumber * std::numbers::pi * (x - g.left) / g.length();
    return -tp * w * std::sin(arg);
}

std::array<double, 2> weak_form_residual(const Trajectory& traj, const TestFunction& test,
                                         double s, double t) {
    const double T = traj.params.horizon;
    if (!(0.0 <= s && s < t && t <= T + 1e-12 * std::max(1.0, T)))
        throw std::invalid_argument("weak_form_residual: window outside [0, T]");
    const Grid& g = traj.grid;
    const double tau = traj.params.tau;
    std::array<double, 2> res{0.0, 0.0};
    const DensityPair& ps = piecewise_constant_sample(traj, s);
    const DensityPair& pt = piecewise_constant_sample(traj, t);
    for (int i = 0; i < 2; ++i) {
        const DensityField& fs = (i == 0) ? ps.rho1 : ps.rho2;
        const DensityField& ft = (i == 0) ? pt.rho1 : pt.rho2;
        if (fs.mass() <= 0.0 && ft.mass() <= 0.0) continue;
        double time_term = 0.0;   // int int rho dpsi/dt
        double flux_term = 0.0;   // int int v dpsi/dx rho
        for (int k = 0; k < traj.n_steps(); ++k) {
            const double lo = std::max(s, tau * k);
            const double hi = std::min(t, tau * (k + 1));
            if (hi <= lo) continue;
            const JkoStepResult& step = traj.steps[k];
            const DensityField& rho = (i == 0) ? step.pair.rho1 : step.pair.rho2;
            const auto& disp = step.displacement[i];
            for (int j = 0; j < g.n_cells; ++j) {
                const double rj = rho.value(j);
                if (rj <= 0.0) continue;
                const double x = g.x_center(j);
                time_term += g.h * rj * (test.value(hi, x, g) - test.value(lo, x, g));
                const double v = disp[j] / tau;
                const double dpsi = 0.5 * (test.dx(lo, x, g) + test.dx(hi, x, g));
                flux_term += (hi - lo) * g.h * rj * v * dpsi;
            }
        }
        double b_s = 0.0, b_t = 0.0;
        for (int j = 0; j < g.n_cells; ++j) {
            b_s += g.h * fs.value(j) * test.value(s, g.x_center(j), g);
            b_t += g.h * ft.value(j) * test.value(t, g.x_center(j), g);
        }
        res[i] = std::abs(-time_term + flux_term - b_s + b_t);
    }
    return res;
}

bool ratio_preservation_check(const DensityPair& before, const DensityPair& after, double r,
                              double eps, double tol) {
    (void)before;  // the statement constrains the output state only
    const Grid& g = after.grid();
    for (int j = 0; j < g.n_cells; ++j) {
        const double r1 = after.rho1.value(j);
        const double r2 = after.rho2.value(j);
        if (r1 > eps && r2 > eps && r * r1 > r2 + tol) return false;
    }
    return true;
}

namespace {

struct PatchRun {
    bool present = false;
    bool single_run = true;
    int first = -1, last = -1;   // qualifying cell range
    double a = 0.0, b = 0.0;     // sub-cell endpoint estimates
};

PatchRun locate_patch(const DensityField& rho, double eps_patch) {
    PatchRun run;
    const Grid& g = rho.grid();
    int runs = 0;
    bool in_run = false;
    for (int j = 0; j < g.n_cells; ++j) {
        const bool q = rho.value(j) > 1.0 - eps_patch;
        if (q) {
            if (!in_run) {
                ++runs;
                if (runs == 1) run.first = j;
            }
            if (runs == 1) run.last = j;
        }
        in_run = q;
    }
    if (runs == 0) return run;
    run.present = true;
    run.single_run = runs == 1;
    // Partial boundary cells refine the endpoint by their coverage fraction.
    run.a = g.x_edge(run.first);
    if (run.first > 0) {
        const double f = std::clamp(rho.value(run.first - 1), 0.0, 1.0);
        run.a -= f * g.h;
    }
    run.b = g.x_edge(run.last + 1);
    if (run.last + 1 < g.n_cells) {
        const double f = std::clamp(rho.value(run.last + 1), 0.0, 1.0);
        run.b += f * g.h;
    }
    return run;
}

}  // namespace

std::vector<InterfaceStepReport> interface_report(const Trajectory& traj) {
    if (!traj.params.incompressible())
        throw std::invalid_argument("interface_report: requires an incompressible trajectory");
    const Grid& g = traj.grid;
    const int N = traj.n_steps();
    std::vector<std::array<PatchRun, 2>> runs(N);
    for (int k = 0; k < N; ++k) {
        runs[k][0] = locate_patch(traj.pairs[k + 1].rho1, kEpsPatch);
        runs[k][1] = locate_patch(traj.pairs[k + 1].rho2, kEpsPatch);
    }
    std::vector<InterfaceStepReport> out(N);
    const double tau = traj.params.tau;
    for (int k = 0; k < N; ++k) {
        InterfaceStepReport& rep = out[k];
        rep.step = k + 1;
        rep.law_residual_left = {kNaN, kNaN};
        rep.law_residual_right = {kNaN, kNaN};
        rep.flux_match_residual = kNaN;
        bool all_present = true;
        for (int i = 0; i < 2; ++i) {
            const bool active = traj.params.species_active(i);
            rep.present[i] = runs[k][i].present;
            if (active && !runs[k][i].present) all_present = false;
            if (!runs[k][i].present) continue;
            rep.left_endpoint[i] = runs[k][i].a;
            rep.right_endpoint[i] = runs[k][i].b;
        }
        rep.patch_ok = all_present && (!runs[k][0].present || runs[k][0].single_run) &&
                       (!runs[k][1].present || runs[k][1].single_run);

        const std::vector<double>& p = traj.steps[k].pressure.values;
        for (int i = 0; i < 2; ++i) {
            if (!runs[k][i].present || k == 0 || k + 1 >= N) continue;
            if (!runs[k - 1][i].present || !runs[k + 1][i].present) continue;
            const double va = (runs[k + 1][i].a - runs[k - 1][i].a) / (2.0 * tau);
            const double vb = (runs[k + 1][i].b - runs[k - 1][i].b) / (2.0 * tau);
            const int j0 = runs[k][i].first;
            const int j1 = runs[k][i].last;
            const PotentialSpec& phi = traj.params.potentials[i];
            if (j0 + 1 <= j1) {
                const double dp_left = (p[j0 + 1] - p[j0]) / g.h;
                const double dp_right = (p[j1] - p[j1 - 1]) / g.h;
                // V = nu (-dp - dPhi): left endpoint has nu = -1.
                rep.law_residual_left[i] =
                    std::abs(-va - (dp_left + phi.slope(runs[k][i].a)));
                rep.law_residual_right[i] =
                    std::abs(vb - (-dp_right - phi.slope(runs[k][i].b)));
            }
        }
        // Flux matching where the species meet in a saturated contact.
        if (runs[k][0].present && runs[k][1].present) {
            const int j1_2 = runs[k][1].last;   // species 2 sits left
            const int j0_1 = runs[k][0].first;  // species 1 sits right
            if (j0_1 - j1_2 <= 2 && j0_1 > j1_2 && j1_2 >= 1 && j0_1 + 1 < g.n_cells) {
                const double from2 = (p[j1_2] - p[j1_2 - 1]) / g.h +
                                     traj.params.potentials[1].slope(runs[k][1].b);
                const double from1 = (p[j0_1 + 1] - p[j0_1]) / g.h +
                                     traj.params.potentials[0].slope(runs[k][0].a);
                rep.flux_match_residual = std::abs(from1 - from2);
            }
        }
    }
    return out;
}

TauRefinementStudy tau_refinement_study(const DensityPair& initial, const ModelParams& params,
                                        int levels, const SolverConfig& solver) {
    if (levels < 2) throw std::invalid_argument("tau_refinement_study: levels must be >= 2");
    TauRefinementStudy study;
    std::vector<Trajectory> trajs;
    std::vector<double> taus;
    for (int l = 0; l < levels; ++l) {
        ModelParams p = params;
        const int factor = 1 << l;
        p.tau = params.tau / factor;
        p.n_steps = params.n_steps * factor;
        trajs.push_back(run_trajectory(initial, p, solver));
        taus.push_back(p.tau);

        if (!params.incompressible()) {
            DensityPair state = initial;
            double gap = 0.0;
            for (int k = 0; k < p.n_steps; ++k) {
                state = explicit_transport_step(state, p);
                if ((k + 1) % factor == 0)
                    gap = std::max(gap, pair_w2_distance(state, trajs.back().pairs[k + 1]));
            }
            study.explicit_gap.push_back(gap);
        }
    }
    const int n0 = params.n_steps;
    for (int l = 0; l + 1 < levels; ++l) {
        TauRefinementRow row;
        row.tau_coarse = taus[l];
        row.tau_fine = taus[l + 1];
        for (int k = 0; k <= n0; ++k) {
            const double t = std::min(params.horizon, k * params.tau);
            row.sup_w2 = std::max(row.sup_w2,
                                  pair_w2_distance(piecewise_constant_sample(trajs[l], t),
                                                   piecewise_constant_sample(trajs[l + 1], t)));
        }
        study.rows.push_back(row);
    }
    for (std::size_t i = 0; i + 1 < study.rows.size(); ++i)
        study.contraction.push_back(study.rows[i + 1].sup_w2 /
                                    std::max(study.rows[i].sup_w2, 1e-300));
    if (study.explicit_gap.size() >= 2) {
        // Least-squares slope of log(gap) against log(tau).
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int n = static_cast<int>(study.explicit_gap.size());
        for (int i = 0; i < n; ++i) {
            const double x = std::log(taus[i]);
            const double y = std::log(std::max(study.explicit_gap[i], 1e-300));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        study.explicit_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return study;
}

std::vector<MSweepRow> m_sweep_study(const DensityPair& initial, const ModelParams& params,
                                     const std::vector<double>& m_list,
                                     const SolverConfig& solver) {
    if (m_list.empty()) throw std::invalid_argument("m_sweep_study: empty m list");
    ModelParams pinf = params;
    pinf.m = ModelParams::infinite_m();
    const Trajectory tinf = run_trajectory(initial, pinf, solver);
    const DensityPair& final_inf = tinf.pairs.back();
    const std::vector<double> p_inf = tinf.steps.empty()
                                          ? std::vector<double>(initial.grid().n_cells, 0.0)
                                          : tinf.steps.back().pressure.values;
    std::vector<double> tot_inf = final_inf.total();

    std::vector<MSweepRow> rows;
    for (double m : m_list) {
        MSweepRow row;
        row.m = m;
        if (std::isinf(m)) {
            for (const auto& st : tinf.steps)
                row.max_complementarity = std::max(row.max_complementarity, st.complementarity);
            for (int k = 1; k <= tinf.n_steps(); ++k) {
                DensityField tot(initial.grid(), tinf.pairs[k].total());
                row.tail_005 = std::max(row.tail_005, saturation_tail(tot, 0.05));
                row.tail_010 = std::max(row.tail_010, saturation_tail(tot, 0.10));
            }
            rows.push_back(row);
            continue;
        }
        ModelParams pm = params;
        pm.m = m;
        const Trajectory tm = run_trajectory(initial, pm, solver);
        for (int k = 1; k <= tm.n_steps(); ++k) {
            DensityField tot(initial.grid(), tm.pairs[k].total());
            row.tail_005 = std::max(row.tail_005, saturation_tail(tot, 0.05));
            row.tail_010 = std::max(row.tail_010, saturation_tail(tot, 0.10));
        }
        row.w2_final_to_inf = pair_w2_distance(tm.pairs.back(), final_inf);
        const std::vector<double> tot_m = tm.pairs.back().total();
        double gap = 0.0;
        for (int j = 0; j < initial.grid().n_cells; ++j) {
            if (tot_inf[j] >= 1.0 - kEpsPatch)
                gap = std::max(gap, std::abs(std::pow(tot_m[j], m) - p_inf[j]));
        }
        row.pressure_gap = gap;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace crossdiff
