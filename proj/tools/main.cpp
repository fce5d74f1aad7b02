#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crossdiff/config.hpp"
#include "crossdiff/diagnostics.hpp"
#include "crossdiff/runio.hpp"
#include "crossdiff/svgplot.hpp"

namespace xd = crossdiff;
namespace fs = std::filesystem;

namespace {

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct Context {
    std::string config_path;
    std::string out_override;
    bool quiet = false;

    xd::RunSpec load() const {
        xd::RunSpec spec = xd::parse_config(config_path);
        if (!out_override.empty()) spec.outputs.directory = out_override;
        return spec;
    }
    void say(const std::string& msg) const {
        if (!quiet) std::cout << msg << '\n';
    }
};

void write_run_plots(const std::string& dir, const xd::Trajectory& traj) {
    const xd::Grid& g = traj.grid;
    std::vector<double> xs(g.n_cells);
    for (int j = 0; j < g.n_cells; ++j) xs[j] = g.x_center(j);
    const int N = traj.n_steps();
    const int mid = N / 2;

    std::vector<xd::PlotSeries> dens;
    dens.push_back({"total t=0", xs, traj.pairs.front().total()});
    dens.push_back({"total t=T/2", xs, traj.pairs[mid].total()});
    dens.push_back({"total t=T", xs, traj.pairs.back().total()});
    dens.push_back({"rho1 t=T", xs, traj.pairs.back().rho1.values()});
    dens.push_back({"rho2 t=T", xs, traj.pairs.back().rho2.values()});
    xd::write_svg_plot(dir + "/density_snapshots.svg", "density snapshots", dens);

    std::vector<double> times, energy;
    for (int k = 0; k <= N; ++k) {
        times.push_back(traj.time_of(k));
        energy.push_back(traj.energies[k].total);
    }
    xd::write_svg_plot(dir + "/energy_decay.svg", "free energy along the run",
                       {{"F+G", times, energy}});

    std::vector<xd::PlotSeries> tracks;
    for (int i = 0; i < 2; ++i) {
        if (!traj.params.species_active(i)) continue;
        std::vector<double> lo, hi, ts;
        for (int k = 0; k <= N; ++k) {
            const xd::DensityField& rho = (i == 0) ? traj.pairs[k].rho1 : traj.pairs[k].rho2;
            const xd::SupportInterval si = xd::support_interval(rho, 1e-8);
            if (si.empty) continue;
            ts.push_back(traj.time_of(k));
            lo.push_back(si.inf_support);
            hi.push_back(si.sup_support);
        }
        tracks.push_back({"inf supp rho" + std::to_string(i + 1), ts, lo});
        tracks.push_back({"sup supp rho" + std::to_string(i + 1), ts, hi});
    }
    xd::write_svg_plot(dir + "/support_tracks.svg", "support intervals", tracks);

    if (N > 0) {
        std::vector<xd::PlotSeries> pres;
        pres.push_back({"p t=T/2", xs, traj.steps[std::max(0, mid - 1)].pressure.values});
        pres.push_back({"p t=T", xs, traj.steps[N - 1].pressure.values});
        xd::write_svg_plot(dir + "/pressure_profiles.svg", "pressure profiles", pres);
    }
}

int cmd_run(const Context& ctx) {
    const xd::RunSpec spec = ctx.load();
    const std::string dir = spec.outputs.directory;
    xd::RunLock lock(dir);
    xd::RunManifest man;
    man.command = "run";
    man.spec_echo = spec.echo;
    man.version = xd::software_version();
    man.started_at = timestamp_now();

    const xd::DensityPair initial = xd::build_initial(spec);
    man.continuum_claim = xd::stable_configuration(spec, initial);
    const xd::Trajectory traj = xd::run_trajectory(initial, spec.model, spec.solver);
    const std::vector<xd::BoundReport> bounds = xd::check_apriori_bounds(traj);

    // Hard invariants: masses, energy monotonicity, a-priori bounds, solver
    // convergence, and (incompressible) feasibility plus complementarity.
    double mass_drift = 0.0;
    for (const auto& pair : traj.pairs) {
        mass_drift = std::max(mass_drift, std::abs(pair.rho1.mass() - spec.model.masses[0]) /
                                              std::max(1.0, spec.model.masses[0]));
        mass_drift = std::max(mass_drift, std::abs(pair.rho2.mass() - spec.model.masses[1]) /
                                              std::max(1.0, spec.model.masses[1]));
    }
    man.checks.push_back({"mass_conservation", mass_drift <= 1e-10, mass_drift, 1e-10});
    double energy_rise = 0.0;
    for (int k = 0; k + 1 <= traj.n_steps(); ++k)
        energy_rise = std::max(energy_rise, traj.energies[k + 1].total - traj.energies[k].total);
    const double rise_tol = 1e-9 * (1.0 + std::abs(traj.energies.front().total));
    man.checks.push_back({"energy_monotonicity", energy_rise <= rise_tol, energy_rise, rise_tol});
    for (const auto& b : bounds)
        man.checks.push_back({"bound_" + b.name, b.satisfied, b.lhs, b.rhs});
    man.checks.push_back({"steps_converged", traj.failed_steps.empty(),
                          static_cast<double>(traj.failed_steps.size()), 0.0});
    if (spec.model.incompressible()) {
        double comp = 0.0, maxtot = 0.0;
        for (const auto& st : traj.steps) comp = std::max(comp, st.complementarity);
        for (const auto& pair : traj.pairs)
            for (int j = 0; j < spec.grid.n_cells; ++j)
                maxtot = std::max(maxtot, pair.total_at(j));
        man.checks.push_back(
            {"complementarity", comp <= 10.0 * spec.solver.inner_tol, comp,
             10.0 * spec.solver.inner_tol});
        man.checks.push_back({"height_constraint", maxtot <= 1.0 + 1e-9, maxtot, 1.0 + 1e-9});
    }

    if (spec.outputs.csv) {
        xd::write_trajectory_csv(dir + "/trajectory.csv", traj);
        man.add_file(dir, "trajectory.csv");
    }
    if (spec.outputs.json) {
        xd::write_diagnostics_json(dir + "/diagnostics.json", traj, bounds,
                                   spec.solver.support_floor);
        man.add_file(dir, "diagnostics.json");
    }
    if (spec.outputs.plots) {
        write_run_plots(dir, traj);
        for (const char* f : {"density_snapshots.svg", "energy_decay.svg", "support_tracks.svg",
                              "pressure_profiles.svg"})
            if (fs::exists(dir + "/" + f)) man.add_file(dir, f);
    }
    for (const auto& c : man.checks) man.all_passed = man.all_passed && c.passed;
    man.finished_at = timestamp_now();
    xd::write_manifest(dir + "/manifest.json", man);
    ctx.say("run: " + std::to_string(traj.n_steps()) + " steps -> " + dir +
            (man.all_passed ? " (all checks passed)" : " (CHECK FAILURES)"));
    if (!man.continuum_claim)
        ctx.say("note: initial data / drifts are not in the stable ordered class; "
                "results carry no continuum-limit claim");
    return man.all_passed ? 0 : 2;
}

int cmd_equilibrium(const Context& ctx) {
    const xd::RunSpec spec = ctx.load();
    if (spec.model.incompressible())
        throw std::invalid_argument("equilibrium command requires finite model.m");
    const std::string dir = spec.outputs.directory;
    xd::RunLock lock(dir);
    xd::RunManifest man;
    man.command = "equilibrium";
    man.spec_echo = spec.echo;
    man.version = xd::software_version();
    man.started_at = timestamp_now();

    const xd::EquilibriumResult eq = xd::equilibrium(spec.model, spec.grid);
    const xd::PotentialField press = xd::pressure_finite_m(eq.pair, spec.model.m);
    double residual_sup = 0.0;
    {
        std::ofstream out(dir + "/equilibrium.csv");
        out << "cell_index,x_center,rho1,rho2,total,residual\n";
        for (int j = 0; j < spec.grid.n_cells; ++j) {
            const double x = spec.grid.x_center(j);
            double target = 0.0;
            if (spec.model.species_active(0))
                target = std::max(target, eq.constants[0] - spec.model.potentials[0].value(x));
            if (spec.model.species_active(1))
                target = std::max(target, eq.constants[1] - spec.model.potentials[1].value(x));
            const double res = std::abs(press.value(j) - target * (target > 0.0 ? 1.0 : 0.0));
            residual_sup = std::max(residual_sup, res);
            out << j << ',' << xd::format_double(x) << ','
                << xd::format_double(eq.pair.rho1.value(j)) << ','
                << xd::format_double(eq.pair.rho2.value(j)) << ','
                << xd::format_double(eq.pair.total_at(j)) << ',' << xd::format_double(res)
                << '\n';
        }
    }
    man.add_file(dir, "equilibrium.csv");
    const double mass_err =
        std::max(std::abs(eq.pair.rho1.mass() - spec.model.masses[0]),
                 std::abs(eq.pair.rho2.mass() - spec.model.masses[1]));
    man.checks.push_back({"equilibrium_masses", mass_err <= 1e-8, mass_err, 1e-8});
    man.checks.push_back({"first_order_condition", residual_sup <= 1e-6, residual_sup, 1e-6});
    man.checks.push_back({"constant_C1", true, eq.constants[0], 0.0});
    man.checks.push_back({"constant_C2", true, eq.constants[1], 0.0});
    man.checks.push_back({"degenerate_active_set", true, eq.degenerate ? 1.0 : 0.0, 0.0});
    man.checks.push_back({"multi_component_support", true, eq.multi_component ? 1.0 : 0.0, 0.0});
    for (const auto& c : man.checks) man.all_passed = man.all_passed && c.passed;
    man.finished_at = timestamp_now();
    xd::write_manifest(dir + "/manifest.json", man);
    ctx.say("equilibrium: C1=" + xd::format_double(eq.constants[0]) +
            " C2=" + xd::format_double(eq.constants[1]) + (eq.degenerate ? " (degenerate)" : ""));
    return man.all_passed ? 0 : 2;
}

int cmd_sweep_m(const Context& ctx) {
    const xd::RunSpec spec = ctx.load();
    if (spec.studies.m_sweep.empty())
        throw std::invalid_argument("sweep-m requires studies.m_sweep in the config");
    const std::string dir = spec.outputs.directory;
    xd::RunLock lock(dir);
    xd::RunManifest man;
    man.command = "sweep-m";
    man.spec_echo = spec.echo;
    man.version = xd::software_version();
    man.started_at = timestamp_now();

    const xd::DensityPair initial = xd::build_initial(spec);
    const auto rows = xd::m_sweep_study(initial, spec.model, spec.studies.m_sweep, spec.solver);
    {
        std::ofstream out(dir + "/m_sweep.csv");
        out << "m,tail_0.05,tail_0.10,w2_final_to_inf,pressure_gap,max_complementarity\n";
        for (const auto& r : rows) {
            if (std::isinf(r.m))
                out << "infinity";
            else
                out << xd::format_double(r.m);
            out << ',' << xd::format_double(r.tail_005) << ',' << xd::format_double(r.tail_010)
                << ',' << xd::format_double(r.w2_final_to_inf) << ','
                << xd::format_double(r.pressure_gap) << ','
                << xd::format_double(r.max_complementarity) << '\n';
        }
    }
    man.add_file(dir, "m_sweep.csv");
    for (const auto& c : man.checks) man.all_passed = man.all_passed && c.passed;
    man.finished_at = timestamp_now();
    xd::write_manifest(dir + "/manifest.json", man);
    ctx.say("sweep-m: " + std::to_string(rows.size()) + " rows -> " + dir + "/m_sweep.csv");
    return 0;
}

int cmd_refine_tau(const Context& ctx) {
    const xd::RunSpec spec = ctx.load();
    if (!spec.studies.tau_levels)
        throw std::invalid_argument("refine-tau requires studies.tau_refinement in the config");
    const std::string dir = spec.outputs.directory;
    xd::RunLock lock(dir);
    xd::RunManifest man;
    man.command = "refine-tau";
    man.spec_echo = spec.echo;
    man.version = xd::software_version();
    man.started_at = timestamp_now();

    const xd::DensityPair initial = xd::build_initial(spec);
    const xd::TauRefinementStudy study =
        xd::tau_refinement_study(initial, spec.model, *spec.studies.tau_levels, spec.solver);
    {
        std::ofstream out(dir + "/tau_refinement.csv");
        out << "level,tau_coarse,tau_fine,sup_w2,contraction\n";
        for (std::size_t i = 0; i < study.rows.size(); ++i) {
            out << i << ',' << xd::format_double(study.rows[i].tau_coarse) << ','
                << xd::format_double(study.rows[i].tau_fine) << ','
                << xd::format_double(study.rows[i].sup_w2) << ',';
            if (i >= 1) out << xd::format_double(study.contraction[i - 1]);
            out << '\n';
        }
    }
    man.add_file(dir, "tau_refinement.csv");
    man.checks.push_back({"explicit_order", true, study.explicit_order, 0.0});
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < study.rows.size(); ++i)
        decreasing = decreasing && study.rows[i + 1].sup_w2 < study.rows[i].sup_w2;
    man.checks.push_back({"sup_w2_decreasing", decreasing, decreasing ? 1.0 : 0.0, 1.0});
    for (const auto& c : man.checks) man.all_passed = man.all_passed && c.passed;
    man.finished_at = timestamp_now();
    xd::write_manifest(dir + "/manifest.json", man);
    ctx.say("refine-tau: " + std::to_string(study.rows.size()) + " comparisons -> " + dir);
    return man.all_passed ? 0 : 2;
}

int cmd_check(const Context& ctx, const std::string& dir_arg) {
    std::string dir = dir_arg;
    if (dir.empty() && !ctx.out_override.empty()) dir = ctx.out_override;
    if (dir.empty()) throw std::invalid_argument("check: pass the run directory (--out or argument)");
    const auto bad = xd::verify_run_directory(dir);
    if (bad.empty()) {
        ctx.say("check: " + dir + " verified");
        return 0;
    }
    for (const auto& f : bad) std::cerr << "check: mismatch in " << f << '\n';
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"1D two-species cross-diffusion laboratory (JKO time stepping)"};
    app.require_subcommand(1);
    Context ctx;
    app.add_option("--config", ctx.config_path, "path to the JSON run configuration")
        ->envname("CROSSDIFF_CONFIG");
    app.add_option("--out", ctx.out_override, "output directory override");
    app.add_flag("--quiet", ctx.quiet, "suppress progress output");

    auto* run = app.add_subcommand("run", "evolve a trajectory and write outputs");
    auto* eq = app.add_subcommand("equilibrium", "solve the steady state (finite m)");
    auto* sweep = app.add_subcommand("sweep-m", "finite-m against incompressible limit table");
    auto* refine = app.add_subcommand("refine-tau", "time-step refinement study");
    auto* check = app.add_subcommand("check", "re-validate a stored run directory");
    std::string check_dir;
    check->add_option("directory", check_dir, "run directory to validate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run)) return cmd_run(ctx);
        if (app.got_subcommand(eq)) return cmd_equilibrium(ctx);
        if (app.got_subcommand(sweep)) return cmd_sweep_m(ctx);
        if (app.got_subcommand(refine)) return cmd_refine_tau(ctx);
        if (app.got_subcommand(check)) return cmd_check(ctx, check_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
