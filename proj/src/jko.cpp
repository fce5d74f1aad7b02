#include "crossdiff/jko.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crossdiff {

namespace {

constexpr double kEtaMin = 1e-13;
constexpr double kArmijo = 1e-4;
constexpr double kExpClamp = 30.0;
constexpr double kUncongested = 1e-3;  // clearly below the height constraint
constexpr int kPatience = 6000;        // stop after this many non-improving iterations

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double mass_of(const Grid& g, const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return g.h * s;
}

void renormalize(const Grid& g, std::vector<double>& v, double target_mass) {
    const double m = mass_of(g, v);
    if (m <= 0.0) return;
    const double f = target_mass / m;
    for (double& x : v) x *= f;
}

/// Mass-preserving feasibility projection onto {rho1 + rho2 <= 1}: overshoot
/// cells are scaled down proportionally across species, the removed mass is
/// refilled outward into the nearest cells with slack (left neighbor first).
void project_feasible(const Grid& g, std::vector<double>& v1, std::vector<double>& v2) {
    const int n = g.n_cells;
    std::vector<double> rem1(n, 0.0), rem2(n, 0.0), slack(n, 0.0);
    bool any = false;
    for (int j = 0; j < n; ++j) {
        const double tot = v1[j] + v2[j];
        if (tot > 1.0) {
            const double f = 1.0 / tot;
            rem1[j] = v1[j] * (1.0 - f);
            rem2[j] = v2[j] * (1.0 - f);
            v1[j] *= f;
            v2[j] *= f;
            any = true;
        } else {
            slack[j] = 1.0 - tot;
        }
    }
    if (!any) return;
    for (int j = 0; j < n; ++j) {
        double rem = rem1[j] + rem2[j];
        if (rem <= 0.0) continue;
        const double m1frac = rem1[j] / rem;
        for (int r = 1; r < n && rem > 0.0; ++r) {
            for (const int c : {j - r, j + r}) {
                if (c < 0 || c >= n || slack[c] <= 0.0 || rem <= 0.0) continue;
                const double take = std::min(rem, slack[c]);
                slack[c] -= take;
                v1[c] += take * m1frac;
                v2[c] += take * (1.0 - m1frac);
                rem -= take;
            }
        }
    }
}

struct SpeciesWork {
    bool active = false;
    double mass = 0.0;
    std::vector<double> wphi;  // Phi_i(x_j) / kappa_i
};

struct Workspace {
    Grid grid;
    std::array<SpeciesWork, 2> sp;
    double tau = 0.0;
    std::array<double, 2> kappa{1.0, 1.0};
    double floor = 0.0;       // seeding floor (density units)
    double hard_floor = 0.0;  // revivability floor during iterations
};

Workspace make_workspace(const DensityPair& prev, const ModelParams& params,
                         const SolverConfig& solver) {
    Workspace w;
    w.grid = prev.grid();
    w.tau = params.tau;
    w.kappa = params.kappa;
    const double scale = (prev.rho1.mass() + prev.rho2.mass()) / w.grid.length();
    w.floor = 1e-4 * solver.support_floor * std::max(1.0, scale);
    w.hard_floor = 1e-8 * w.floor;
    for (int i = 0; i < 2; ++i) {
        const DensityField& f = (i == 0) ? prev.rho1 : prev.rho2;
        w.sp[i].active = f.mass() > 0.0;
        w.sp[i].mass = f.mass();
        if (!w.sp[i].active) continue;
        w.sp[i].wphi.resize(w.grid.n_cells);
        for (int j = 0; j < w.grid.n_cells; ++j)
            w.sp[i].wphi[j] = params.weighted_potential(i, w.grid.x_center(j));
    }
    return w;
}

std::vector<double> floored(const Workspace& w, const std::vector<double>& v, double mass) {
    std::vector<double> out(v);
    for (double& x : out) x = std::max(x, w.floor);
    renormalize(w.grid, out, mass);
    return out;
}

double kappa_metric_term(const Workspace& w, const std::array<double, 2>& w2sq) {
    double acc = 0.0;
    for (int i = 0; i < 2; ++i)
        if (w.sp[i].active) acc += w2sq[i] / (2.0 * w.tau * w.kappa[i]);
    return acc;
}

/// G_kappa for raw value arrays.
double weighted_drift_energy(const Workspace& w, const std::array<std::vector<double>, 2>& v) {
    double acc = 0.0;
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        for (int j = 0; j < w.grid.n_cells; ++j) acc += w.sp[i].wphi[j] * v[i][j];
    }
    return w.grid.h * acc;
}

double internal_energy_raw(const Workspace& w, double m, const std::array<std::vector<double>, 2>& v) {
    double acc = 0.0;
    for (int j = 0; j < w.grid.n_cells; ++j) {
        const double tot = (w.sp[0].active ? v[0][j] : 0.0) + (w.sp[1].active ? v[1][j] : 0.0);
        acc += std::pow(tot, m);
    }
    return w.grid.h * acc / (m - 1.0);
}

struct PressureRecovery {
    std::vector<double> p;
    std::array<double, 2> constants{0.0, 0.0};
    double complementarity = 0.0;
    double negativity = 0.0;       // (-q)+ on saturated support cells
    double uncongested_dev = 0.0;  // |q| on clearly uncongested support cells
};

/// Constants and pressure for the constrained step, from the per-species
/// stationarity value a_i = Phi_i/k_i + phibar_i/(tau k_i): the shared
/// multiplier is q_i = C_i - a_i on {rho_i > eps}.
PressureRecovery recover_pressure(const Workspace& w, const std::array<std::vector<double>, 2>& v,
                                  const std::array<std::vector<double>, 2>& phiavg,
                                  double eps_supp) {
    const int n = w.grid.n_cells;
    PressureRecovery out;
    out.p.assign(n, 0.0);

    std::array<std::vector<double>, 2> a;
    std::array<std::vector<int>, 2> supp;
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        a[i].resize(n);
        for (int j = 0; j < n; ++j)
            a[i][j] = w.sp[i].wphi[j] + phiavg[i][j] / (w.tau * w.kappa[i]);
        for (int j = 0; j < n; ++j)
            if (v[i][j] > eps_supp) supp[i].push_back(j);
    }
    auto tot_at = [&](int j) {
        return (w.sp[0].active ? v[0][j] : 0.0) + (w.sp[1].active ? v[1][j] : 0.0);
    };

    std::array<bool, 2> fixed{false, false};
    // (a) species with clearly uncongested support cells: mass-weighted mean
    // of a_i there (weighting keeps half-grown frontier cells from biasing it).
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active || supp[i].empty()) continue;
        double acc = 0.0;
        double wsum = 0.0;
        for (int j : supp[i])
            if (tot_at(j) < 1.0 - kUncongested) {
                acc += v[i][j] * a[i][j];
                wsum += v[i][j];
            }
        if (wsum > 0.0) {
            out.constants[i] = acc / wsum;
            fixed[i] = true;
        }
    }
    // (b)/(c) fully saturated species: continuity at a contact with a fixed
    // species, else vanishing pressure at the support boundary (max of a_i).
    for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < 2; ++i) {
            if (!w.sp[i].active || fixed[i] || supp[i].empty()) continue;
            const int o = 1 - i;
            if (w.sp[o].active && fixed[o] && !supp[o].empty()) {
                // Facing cells of the two supports, if adjacent within 2 cells.
                int ji = -1, jo = -1;
                if (supp[o].front() > supp[i].back()) {
                    ji = supp[i].back();
                    jo = supp[o].front();
                } else if (supp[i].front() > supp[o].back()) {
                    ji = supp[i].front();
                    jo = supp[o].back();
                }
                if (ji >= 0 && std::abs(ji - jo) <= 2) {
                    const double q_other = out.constants[o] - a[o][jo];
                    out.constants[i] = q_other + a[i][ji];
                    fixed[i] = true;
                    continue;
                }
            }
            if (pass == 1) {
                double amax = -std::numeric_limits<double>::infinity();
                for (int j : supp[i]) amax = std::max(amax, a[i][j]);
                out.constants[i] = amax;
                fixed[i] = true;
            }
        }
    }

    // Assemble p per Eq-style support rule; on overlap cells species 2 wins.
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        for (int j : supp[i]) out.p[j] = std::max(out.constants[i] - a[i][j], 0.0);
    }
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        for (int j : supp[i]) {
            const double q = out.constants[i] - a[i][j];
            const double tot = tot_at(j);
            if (tot < 1.0 - kUncongested)
                out.uncongested_dev = std::max(out.uncongested_dev, std::abs(q));
            else
                out.negativity = std::max(out.negativity, -std::min(q, 0.0));
        }
    }
    double comp = 0.0;
    for (int j = 0; j < n; ++j) comp += std::abs(out.p[j] * (1.0 - tot_at(j)));
    out.complementarity = w.grid.h * comp;
    return out;
}

struct InnerState {
    std::array<std::vector<double>, 2> v;
    std::array<TransportAnalysis, 2> an;
    std::array<double, 2> w2sq{0.0, 0.0};
    double objective = 0.0;
};

void analyze(const Workspace& w, const DensityPair& prev, double m_exponent, bool incompressible,
             InnerState& st) {
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        DensityField cur(w.grid, st.v[i]);
        st.an[i] = transport_analysis(cur, (i == 0) ? prev.rho1 : prev.rho2);
        st.w2sq[i] = st.an[i].w2sq;
    }
    double e = weighted_drift_energy(w, st.v);
    if (!incompressible) e += internal_energy_raw(w, m_exponent, st.v);
    st.objective = e + kappa_metric_term(w, st.w2sq);
}

/// Mirror (multiplicative) trial step against the fields grad[i], mass kept
/// fixed; incompressible states are projected back under the height bound.
std::array<std::vector<double>, 2> mirror_candidate(const Workspace& w,
                                                    const std::array<std::vector<double>, 2>& v,
                                                    const std::array<std::vector<double>, 2>& grad,
                                                    double eta, bool incompressible,
                                                    std::vector<double>* pre_totals = nullptr) {
    const int n = w.grid.n_cells;
    std::array<std::vector<double>, 2> out;
    for (int i = 0; i < 2; ++i) {
        if (!w.sp[i].active) continue;
        out[i] = v[i];
        // Center the exponent for overflow safety; the mass renormalization
        // cancels any constant shift.
        double gmin = std::numeric_limits<double>::infinity();
        double gmax = -gmin;
        for (int j = 0; j < n; ++j) {
            gmin = std::min(gmin, grad[i][j]);
            gmax = std::max(gmax, grad[i][j]);
        }
        const double center = 0.5 * (gmin + gmax);
        for (int j = 0; j < n; ++j) {
            const double e = std::clamp(-eta * (grad[i][j] - center), -kExpClamp, kExpClamp);
            out[i][j] = std::max(v[i][j] * std::exp(e), w.hard_floor);
        }
        renormalize(w.grid, out[i], w.sp[i].mass);
    }
    if (pre_totals != nullptr) {
        pre_totals->assign(n, 0.0);
        for (int i = 0; i < 2; ++i)
            if (w.sp[i].active)
                for (int j = 0; j < n; ++j) (*pre_totals)[j] += out[i][j];
    }
    if (incompressible) {
        if (w.sp[0].active && w.sp[1].active)
            project_feasible(w.grid, out[0], out[1]);
        else if (w.sp[0].active) {
            std::vector<double> empty(n, 0.0);
            project_feasible(w.grid, out[0], empty);
        } else {
            std::vector<double> empty(n, 0.0);
            project_feasible(w.grid, empty, out[1]);
        }
    }
    return out;
}

JkoStepResult finalize(const Workspace& w, const ModelParams& params, InnerState& st,
                       const std::array<double, 2>& constants, double residual, int iterations,
                       bool converged, const SolverConfig& solver) {
    const int n = w.grid.n_cells;
    JkoStepResult res;
    DensityField f1 = w.sp[0].active ? DensityField(w.grid, st.v[0]) : DensityField::zero(w.grid);
    DensityField f2 = w.sp[1].active ? DensityField(w.grid, st.v[1]) : DensityField::zero(w.grid);
    res.pair = DensityPair(std::move(f1), std::move(f2));
    for (int i = 0; i < 2; ++i) {
        if (w.sp[i].active) {
            res.potentials[i] = PotentialField(w.grid, st.an[i].phi_center);
            res.phi_cellavg[i] = st.an[i].phi_cellavg;
            res.displacement[i] = st.an[i].displacement_center;
        } else {
            res.potentials[i] = PotentialField(w.grid, std::vector<double>(n, 0.0));
            res.phi_cellavg[i].assign(n, 0.0);
            res.displacement[i].assign(n, 0.0);
        }
        res.w2sq[i] = st.w2sq[i];
    }
    res.optimality_residual = residual;
    res.constants = constants;
    res.inner_iterations = iterations;
    res.converged = converged;
    if (params.incompressible()) {
        PressureRecovery pr =
            recover_pressure(w, st.v, res.phi_cellavg, solver.support_floor);
        res.pressure = PotentialField(w.grid, std::move(pr.p));
        res.constants = pr.constants;
        res.complementarity = pr.complementarity;
    } else {
        res.pressure = pressure_finite_m(res.pair, params.m);
    }
    return res;
}

}  // namespace

void SolverConfig::validate() const {
    if (!(inner_tol > 0.0)) throw std::invalid_argument("solver.inner_tol must be positive");
    if (max_inner < 1) throw std::invalid_argument("solver.max_inner must be at least 1");
    if (step_rule != "backtracking")
        throw std::invalid_argument("solver.step_rule: unknown rule (accepted: backtracking)");
    if (!(support_floor > 0.0)) throw std::invalid_argument("solver.support_floor must be positive");
}

JkoStepResult jko_step(const DensityPair& prev, const ModelParams& params,
                       const SolverConfig& solver) {
    require(!params.incompressible(), "jko_step: finite m required (use the incompressible step)");
    solver.validate();
    Workspace w = make_workspace(prev, params, solver);
    const int n = w.grid.n_cells;
    const double m = params.m;
    const double mm = m / (m - 1.0);

    InnerState st;
    {
        DensityPair warm = explicit_transport_step(prev, params);
        std::array<std::vector<double>, 2> a{floored(w, warm.rho1.values(), w.sp[0].mass),
                                             floored(w, warm.rho2.values(), w.sp[1].mass)};
        std::array<std::vector<double>, 2> b{floored(w, prev.rho1.values(), w.sp[0].mass),
                                             floored(w, prev.rho2.values(), w.sp[1].mass)};
        InnerState sa, sb;
        sa.v = std::move(a);
        sb.v = std::move(b);
        analyze(w, prev, m, false, sa);
        analyze(w, prev, m, false, sb);
        st = (sa.objective <= sb.objective) ? std::move(sa) : std::move(sb);
    }

    std::array<std::vector<double>, 2> grad;
    std::array<double, 2> constants{0.0, 0.0};

    // First variation per species, fitted constants, and the sup residual of
    // the first-order condition, evaluated on an analyzed state.
    auto assess = [&](const InnerState& s, std::array<std::vector<double>, 2>& g_out,
                      std::array<double, 2>& c_out) {
        std::array<std::vector<double>, 2> act;
        std::vector<double> ptot(n);
        for (int j = 0; j < n; ++j) {
            const double tot =
                (w.sp[0].active ? s.v[0][j] : 0.0) + (w.sp[1].active ? s.v[1][j] : 0.0);
            ptot[j] = mm * std::pow(tot, m - 1.0);
        }
        for (int i = 0; i < 2; ++i) {
            if (!w.sp[i].active) continue;
            g_out[i].resize(n);
            act[i].resize(n);
            double csum = 0.0;
            double cw = 0.0;
            for (int j = 0; j < n; ++j) {
                act[i][j] = w.sp[i].wphi[j] + s.an[i].phi_cellavg[j] / (w.tau * w.kappa[i]);
                g_out[i][j] = ptot[j] + act[i][j];
                if (s.v[i][j] > solver.support_floor) {
                    csum += s.v[i][j] * g_out[i][j];
                    cw += s.v[i][j];
                }
            }
            c_out[i] = (cw > 0.0) ? csum / cw : 0.0;
        }
        double res = 0.0;
        for (int j = 0; j < n; ++j) {
            double target = 0.0;
            for (int i = 0; i < 2; ++i)
                if (w.sp[i].active) target = std::max(target, c_out[i] - act[i][j]);
            res = std::max(res, std::abs(ptot[j] - target));
        }
        return res;
    };

    double residual = assess(st, grad, constants);
    double eta_hint = 1.0;
    InnerState best = st;
    std::array<double, 2> best_constants = constants;
    double best_residual = residual;
    int since_best = 0;
    int it = 0;
    bool converged = false;

    for (it = 0; it < solver.max_inner; ++it) {
        if (residual <= solver.inner_tol) {
            converged = true;
            break;
        }
        double dnorm = 0.0;
        for (int i = 0; i < 2; ++i) {
            if (!w.sp[i].active) continue;
            double gbar = 0.0;
            for (int j = 0; j < n; ++j) gbar += st.v[i][j] * grad[i][j];
            gbar = w.grid.h * gbar / w.sp[i].mass;
            for (int j = 0; j < n; ++j) {
                const double d = grad[i][j] - gbar;
                dnorm += w.grid.h * st.v[i][j] * d * d;
            }
        }
        const double jnoise =
            64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(st.objective));
        bool accepted = false;
        if (kArmijo * dnorm > jnoise) {
            // Backtracking on the objective, starting near the last accepted
            // step size.
            for (double eta = eta_hint; eta >= kEtaMin; eta *= 0.5) {
                InnerState cand;
                cand.v = mirror_candidate(w, st.v, grad, eta, false);
                analyze(w, prev, m, false, cand);
                if (cand.objective <= st.objective - kArmijo * eta * dnorm) {
                    st = std::move(cand);
                    eta_hint = std::min(1.0, 4.0 * eta);
                    accepted = true;
                    break;
                }
            }
            if (accepted) residual = assess(st, grad, constants);
        }
#ifdef CROSSDIFF_TRACE
        if (it % 200 == 0)
            fprintf(stderr, "it=%d r=%.3e D=%.3e J=%.17g\n", it, residual, dnorm, st.objective);
#endif
        if (!accepted) {
            // The objective can no longer resolve the decrease: polish against
            // the residual itself, never letting the objective measurably rise.
            bool have_probe = false;
            InnerState probe;
            for (double eta = 1.0; eta >= kEtaMin; eta *= 0.5) {
                InnerState cand;
                cand.v = mirror_candidate(w, st.v, grad, eta, false);
                analyze(w, prev, m, false, cand);
                if (cand.objective > st.objective + jnoise) continue;
                std::array<std::vector<double>, 2> gc;
                std::array<double, 2> cc{0.0, 0.0};
                const double rc = assess(cand, gc, cc);
                if (rc <= residual * (1.0 + 1e-4)) {
                    st = std::move(cand);
                    grad = std::move(gc);
                    constants = cc;
                    residual = rc;
                    accepted = true;
                    break;
                }
                if (!have_probe) {
                    probe = std::move(cand);
                    have_probe = true;
                }
            }
            if (!accepted && have_probe) {
                // No step keeps the residual flat: take the largest admissible
                // move anyway; the best-state bookkeeping below bounds the harm.
                st = std::move(probe);
                residual = assess(st, grad, constants);
                accepted = true;
            }
        }
        if (residual < best_residual) {
            best_residual = residual;
            best = st;
            best_constants = constants;
            since_best = 0;
        } else if (++since_best > kPatience) {
            break;
        }
        if (!accepted) break;
    }
    if (best_residual < residual) {
        st = std::move(best);
        analyze(w, prev, m, false, st);
        constants = best_constants;
        residual = best_residual;
    }
    converged = converged || residual <= 10.0 * solver.inner_tol;
    return finalize(w, params, st, constants, residual, it, converged, solver);
}

JkoStepResult jko_step_incompressible(const DensityPair& prev, const ModelParams& params,
                                      const SolverConfig& solver,
                                      const PotentialField* warm_pressure) {
    require(params.incompressible(), "jko_step_incompressible: m must be \"infinity\"");
    solver.validate();
    require(prev.grid().length() > prev.rho1.mass() + prev.rho2.mass(),
            "incompressible step requires |Omega| > M1 + M2");
    for (int j = 0; j < prev.grid().n_cells; ++j)
        require(prev.total_at(j) <= 1.0 + kFeasTol, "incompressible step: infeasible input state");

    Workspace w = make_workspace(prev, params, solver);
    const int n = w.grid.n_cells;

    InnerState st;
    {
        DensityPair warm = explicit_transport_step(prev, params, warm_pressure);
        std::array<std::vector<double>, 2> a{floored(w, warm.rho1.values(), w.sp[0].mass),
                                             floored(w, warm.rho2.values(), w.sp[1].mass)};
        std::array<std::vector<double>, 2> b{floored(w, prev.rho1.values(), w.sp[0].mass),
                                             floored(w, prev.rho2.values(), w.sp[1].mass)};
        if (w.sp[0].active && w.sp[1].active) {
            project_feasible(w.grid, a[0], a[1]);
            project_feasible(w.grid, b[0], b[1]);
        } else {
            std::vector<double> e1(n, 0.0), e2(n, 0.0);
            if (w.sp[0].active) {
                project_feasible(w.grid, a[0], e1);
                project_feasible(w.grid, b[0], e2);
            } else {
                project_feasible(w.grid, e1, a[1]);
                project_feasible(w.grid, e2, b[1]);
            }
        }
        InnerState sa, sb;
        sa.v = std::move(a);
        sb.v = std::move(b);
        analyze(w, prev, 0.0, true, sa);
        analyze(w, prev, 0.0, true, sb);
        st = (sa.objective <= sb.objective) ? std::move(sa) : std::move(sb);
    }

    std::array<std::vector<double>, 2> grad;
    std::array<double, 2> constants{0.0, 0.0};

    // Persistent multiplier estimate for the height constraint; it enters the
    // descent direction and is updated from the pre-projection overshoot.
    std::vector<double> dualp(n, 0.0);
    if (warm_pressure != nullptr)
        for (int j = 0; j < n; ++j) dualp[j] = std::max(warm_pressure->values[j], 0.0);

    auto rebuild_grad = [&](const InnerState& s) {
        for (int i = 0; i < 2; ++i) {
            if (!w.sp[i].active) continue;
            grad[i].resize(n);
            for (int j = 0; j < n; ++j)
                grad[i][j] = w.sp[i].wphi[j] + s.an[i].phi_cellavg[j] / (w.tau * w.kappa[i]) +
                             dualp[j] / w.kappa[i];
        }
    };

    // Stopping residual: the recovered-pressure complementarity system.
    auto assess = [&](const InnerState& s, std::array<double, 2>& c_out) {
        std::array<std::vector<double>, 2> phiavg;
        for (int i = 0; i < 2; ++i)
            if (w.sp[i].active) phiavg[i] = s.an[i].phi_cellavg;
        PressureRecovery pr = recover_pressure(w, s.v, phiavg, solver.support_floor);
        c_out = pr.constants;
        return std::max({pr.complementarity, pr.negativity, pr.uncongested_dev});
    };

    rebuild_grad(st);
    double residual = assess(st, constants);
    double eta_hint = 1.0;
    InnerState best = st;
    std::array<double, 2> best_constants = constants;
    double best_residual = residual;
    int since_best = 0;
    int it = 0;
    bool converged = false;

    for (it = 0; it < solver.max_inner; ++it) {
        if (residual <= solver.inner_tol) {
            converged = true;
            break;
        }
        double dnorm = 0.0;
        for (int i = 0; i < 2; ++i) {
            if (!w.sp[i].active) continue;
            double gbar = 0.0;
            for (int j = 0; j < n; ++j) gbar += st.v[i][j] * grad[i][j];
            gbar = w.grid.h * gbar / w.sp[i].mass;
            for (int j = 0; j < n; ++j) {
                const double d = grad[i][j] - gbar;
                dnorm += w.grid.h * st.v[i][j] * d * d;
            }
        }
        const double jnoise =
            64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(st.objective));
        bool accepted = false;
        std::vector<double> pre_totals;
        std::vector<double> fallback_pt;
        if (kArmijo * dnorm > jnoise) {
            for (double eta = 1.0; eta >= kEtaMin; eta *= 0.5) {
                InnerState cand;
                std::vector<double> pt;
                cand.v = mirror_candidate(w, st.v, grad, eta, true, &pt);
                analyze(w, prev, 0.0, true, cand);
                if (fallback_pt.empty()) fallback_pt = pt;
                if (cand.objective <= st.objective - kArmijo * eta * dnorm) {
                    st = std::move(cand);
                    pre_totals = std::move(pt);
                    eta_hint = std::min(1.0, 4.0 * eta);
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            bool have_probe = false;
            InnerState probe;
            std::vector<double> probe_pt;
            for (double eta = 1.0; eta >= kEtaMin; eta *= 0.5) {
                InnerState cand;
                std::vector<double> pt;
                cand.v = mirror_candidate(w, st.v, grad, eta, true, &pt);
                analyze(w, prev, 0.0, true, cand);
                if (fallback_pt.empty()) fallback_pt = pt;
                if (cand.objective > st.objective + jnoise) continue;
                std::array<double, 2> cc{0.0, 0.0};
                // Trial residual with the candidate in place.
                const double rc = [&] {
                    std::array<std::vector<double>, 2> phiavg;
                    for (int i = 0; i < 2; ++i)
                        if (w.sp[i].active) phiavg[i] = cand.an[i].phi_cellavg;
                    PressureRecovery pr = recover_pressure(w, cand.v, phiavg,
                                                           solver.support_floor);
                    cc = pr.constants;
                    return std::max({pr.complementarity, pr.negativity, pr.uncongested_dev});
                }();
                if (rc <= residual * (1.0 + 1e-4)) {
                    st = std::move(cand);
                    constants = cc;
                    residual = rc;
                    pre_totals = std::move(pt);
                    accepted = true;
                    break;
                }
                if (!have_probe) {
                    probe = std::move(cand);
                    probe_pt = std::move(pt);
                    have_probe = true;
                }
            }
            if (!accepted && have_probe) {
                st = std::move(probe);
                pre_totals = std::move(probe_pt);
                accepted = true;
            }
        }
        // Uzawa update of the multiplier from the pre-projection overshoot;
        // it decays where the constraint is slack. Runs even when no primal
        // step was accepted, so a mismatched multiplier cannot jam the search.
        const std::vector<double>& pt = accepted ? pre_totals : fallback_pt;
        if (!pt.empty()) {
            const double sigma = 1.0;
            for (int j = 0; j < n; ++j)
                dualp[j] = std::max(dualp[j] + sigma * (pt[j] - 1.0), 0.0);
        }
        rebuild_grad(st);
        if (accepted) residual = assess(st, constants);
        if (residual < best_residual) {
            best_residual = residual;
            best = st;
            best_constants = constants;
            since_best = 0;
        } else if (++since_best > kPatience) {
            break;
        }
    }
    if (best_residual < residual) {
        st = std::move(best);
        analyze(w, prev, 0.0, true, st);
        constants = best_constants;
        residual = best_residual;
    }
    converged = converged || residual <= 10.0 * solver.inner_tol;
    return finalize(w, params, st, constants, residual, it, converged, solver);
}

DensityPair explicit_transport_step(const DensityPair& prev, const ModelParams& params,
                                    const PotentialField* pressure) {
    const Grid& g = prev.grid();
    const int n = g.n_cells;
    const double eps = 1e-8;

    // Pressure-gradient part of the velocity, shared by both species.
    std::vector<double> gradp(n, 0.0);
    if (!params.incompressible()) {
        const double m = params.m;
        std::vector<double> wv(n);
        std::vector<double> tot(n);
        for (int j = 0; j < n; ++j) {
            tot[j] = prev.total_at(j);
            wv[j] = m / (m - 1.0) * std::pow(tot[j], m - 1.0);
        }
        for (int j = 0; j < n; ++j) {
            if (tot[j] <= eps) continue;
            const bool nl = j > 0 && tot[j - 1] > eps;
            const bool nr = j + 1 < n && tot[j + 1] > eps;
            if (nl && nr)
                gradp[j] = (wv[j + 1] - wv[j - 1]) / (2.0 * g.h);
            else if (nr)
                gradp[j] = (wv[j + 1] - wv[j]) / g.h;
            else if (nl)
                gradp[j] = (wv[j] - wv[j - 1]) / g.h;
        }
    } else if (pressure != nullptr) {
        const std::vector<double>& p = pressure->values;
        for (int j = 0; j < n; ++j) {
            if (j > 0 && j + 1 < n)
                gradp[j] = (p[j + 1] - p[j - 1]) / (2.0 * g.h);
            else if (j == 0)
                gradp[j] = (p[1] - p[0]) / g.h;
            else
                gradp[j] = (p[j] - p[j - 1]) / g.h;
        }
    }

    auto move_species = [&](const DensityField& rho, int i) {
        if (rho.mass() <= 0.0) return rho;
        std::vector<double> vel(n, 0.0);
        for (int j = 0; j < n; ++j)
            vel[j] = -params.kappa[static_cast<std::size_t>(i)] * gradp[j] -
                     params.potentials[static_cast<std::size_t>(i)].slope(g.x_center(j));
        TransportMap1D map;
        map.source_mass = rho.mass();
        double cum = 0.0;
        double ycursor = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            const double mj = g.h * rho.value(j);
            if (mj <= 0.0) {
                continue;
            }
            // Edge velocities from the adjacent in-support cells.
            auto edge_vel = [&](int e) {
                const bool l = e > 0 && rho.value(e - 1) > 0.0;
                const bool r = e < n && rho.value(e) > 0.0;
                if (l && r) return 0.5 * (vel[e - 1] + vel[e]);
                if (l) return vel[e - 1];
                if (r) return vel[e];
                return 0.0;
            };
            double y0 = g.x_edge(j) + params.tau * edge_vel(j);
            double y1 = g.x_edge(j + 1) + params.tau * edge_vel(j + 1);
            y0 = std::max(y0, ycursor);
            y1 = std::max(y1, y0);
            ycursor = y1;
            map.slabs.push_back({cum, cum + mj, g.x_edge(j), g.x_edge(j + 1), y0, y1});
            cum += mj;
        }
        return pushforward(rho, map);
    };

    return DensityPair(move_species(prev.rho1, 0), move_species(prev.rho2, 1));
}

PotentialField recover_pressure_incompressible(const JkoStepResult& step,
                                               const ModelParams& params) {
    require(params.incompressible(), "recover_pressure_incompressible: m must be \"infinity\"");
    require(!step.phi_cellavg[0].empty() || !step.phi_cellavg[1].empty(),
            "recover_pressure_incompressible: step carries no potentials");
    SolverConfig defaults;
    Workspace w = make_workspace(step.pair, params, defaults);
    std::array<std::vector<double>, 2> v{step.pair.rho1.values(), step.pair.rho2.values()};
    PressureRecovery pr = recover_pressure(w, v, step.phi_cellavg, defaults.support_floor);
    return PotentialField(step.pair.grid(), std::move(pr.p));
}

Trajectory run_trajectory(const DensityPair& initial, const ModelParams& params,
                          const SolverConfig& solver) {
    params.validate(initial.grid());
    solver.validate();
    for (int i = 0; i < 2; ++i) {
        const double m0 = (i == 0) ? initial.rho1.mass() : initial.rho2.mass();
        require(std::abs(m0 - params.masses[static_cast<std::size_t>(i)]) <=
                    1e-9 * std::max(1.0, params.masses[static_cast<std::size_t>(i)]),
                "run_trajectory: initial masses disagree with model.masses");
    }
    Trajectory traj;
    traj.params = params;
    traj.grid = initial.grid();
    traj.pairs.push_back(initial);
    traj.energies.push_back(energy_report(initial, params));
    for (int k = 0; k < params.n_steps; ++k) {
        JkoStepResult res;
        if (params.incompressible()) {
            const PotentialField* warm_p =
                traj.steps.empty() ? nullptr : &traj.steps.back().pressure;
            res = jko_step_incompressible(traj.pairs.back(), params, solver, warm_p);
        } else {
            res = jko_step(traj.pairs.back(), params, solver);
        }
        if (!res.converged) traj.failed_steps.push_back(k);
        traj.pairs.push_back(res.pair);
        traj.energies.push_back(energy_report(res.pair, params));
        traj.steps.push_back(std::move(res));
    }
    return traj;
}

}  // namespace crossdiff
