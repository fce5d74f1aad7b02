#include "crossdiff/runio.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace crossdiff {

namespace fs = std::filesystem;
using nlohmann::json;

std::string software_version() { return "0.1.0"; }

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_digest: cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

void RunManifest::add_file(const std::string& dir, const std::string& name) {
    files.emplace_back(name, file_digest(dir + "/" + name));
}

RunLock::RunLock(const std::string& directory) {
    fs::create_directories(directory);
    path_ = directory + "/.lock";
    if (fs::exists(path_))
        throw std::runtime_error("run directory is locked by another invocation: " + path_);
    std::ofstream out(path_);
    out << "locked\n";
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step,time,species,cell_index,x_center,density,velocity,pressure\n";
    const Grid& g = traj.grid;
    const bool inc = traj.params.incompressible();
    for (int k = 0; k < static_cast<int>(traj.pairs.size()); ++k) {
        const DensityPair& pair = traj.pairs[static_cast<std::size_t>(k)];
        const JkoStepResult* step =
            (k >= 1) ? &traj.steps[static_cast<std::size_t>(k - 1)] : nullptr;
        std::vector<double> pressure;
        if (step != nullptr)
            pressure = step->pressure.values;
        else if (!inc)
            pressure = pressure_finite_m(pair, traj.params.m).values;
        else
            pressure.assign(g.n_cells, 0.0);
        const double t = traj.time_of(k);
        for (int i = 0; i < 2; ++i) {
            const DensityField& rho = (i == 0) ? pair.rho1 : pair.rho2;
            for (int j = 0; j < g.n_cells; ++j) {
                out << k << ',' << format_double(t) << ',' << (i + 1) << ',' << j << ','
                    << format_double(g.x_center(j)) << ',' << format_double(rho.value(j)) << ',';
                if (step != nullptr && rho.value(j) > 1e-8)
                    out << format_double(step->displacement[static_cast<std::size_t>(i)]
                                             [static_cast<std::size_t>(j)] /
                                         traj.params.tau);
                out << ',' << format_double(pressure[static_cast<std::size_t>(j)]) << '\n';
            }
        }
    }
}

void write_diagnostics_json(const std::string& path, const Trajectory& traj,
                            const std::vector<BoundReport>& bounds, double eps_supp) {
    json root;
    root["schema_version"] = 1;
    json steps = json::array();
    for (int k = 0; k < static_cast<int>(traj.pairs.size()); ++k) {
        const DensityPair& pair = traj.pairs[static_cast<std::size_t>(k)];
        const EnergyReport& e = traj.energies[static_cast<std::size_t>(k)];
        json rec;
        rec["step"] = k;
        rec["time"] = traj.time_of(k);
        rec["F"] = e.internal;
        rec["G"] = e.potential;
        rec["total_energy"] = e.total;
        if (k >= 1) {
            const JkoStepResult& st = traj.steps[static_cast<std::size_t>(k - 1)];
            rec["w2sq_1"] = st.w2sq[0];
            rec["w2sq_2"] = st.w2sq[1];
            rec["optimality_residual"] = st.optimality_residual;
            if (traj.params.incompressible())
                rec["complementarity_residual"] = st.complementarity;
        } else {
            rec["w2sq_1"] = 0.0;
            rec["w2sq_2"] = 0.0;
            rec["optimality_residual"] = 0.0;
            if (traj.params.incompressible()) rec["complementarity_residual"] = 0.0;
        }
        rec["overlap"] = overlap_measure(pair, eps_supp);
        const OrderingReport ord = ordering_check(pair, eps_supp);
        rec["ordering_gap"] = ord.vacuous ? 0.0 : ord.gap;
        rec["patch_deviation_1"] = patch_deviation(pair.rho1, eps_supp);
        rec["patch_deviation_2"] = patch_deviation(pair.rho2, eps_supp);
        steps.push_back(std::move(rec));
    }
    root["steps"] = std::move(steps);
    json jb = json::array();
    for (const BoundReport& b : bounds) {
        jb.push_back({{"name", b.name},
                      {"lhs", b.lhs},
                      {"rhs", b.rhs},
                      {"satisfied", b.satisfied},
                      {"margin", b.margin}});
    }
    root["bounds"] = std::move(jb);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << root.dump(2) << '\n';
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json root;
    root["command"] = m.command;
    root["software_version"] = m.version;
    root["schema_version"] = 1;
    root["started_at"] = m.started_at;
    root["finished_at"] = m.finished_at;
    root["continuum_claim"] = m.continuum_claim ? "stable-ordered" : "none";
    root["all_passed"] = m.all_passed;
    try {
        root["spec"] = json::parse(m.spec_echo);
    } catch (...) {
        root["spec"] = m.spec_echo;
    }
    json checks = json::array();
    for (const HardCheck& c : m.checks)
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"value", c.value},
                          {"threshold", c.threshold}});
    root["checks"] = std::move(checks);
    json files = json::object();
    for (const auto& [name, digest] : m.files) files[name] = digest;
    root["files"] = std::move(files);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << root.dump(2) << '\n';
}

std::vector<std::string> verify_run_directory(const std::string& directory) {
    std::vector<std::string> bad;
    const std::string mpath = directory + "/manifest.json";
    std::ifstream in(mpath);
    if (!in) {
        bad.push_back("manifest.json (missing)");
        return bad;
    }
    json root;
    try {
        in >> root;
    } catch (...) {
        bad.push_back("manifest.json (unparsable)");
        return bad;
    }
    if (!root.contains("files") || !root["files"].is_object()) {
        bad.push_back("manifest.json (no files section)");
        return bad;
    }
    for (const auto& [name, digest] : root["files"].items()) {
        const std::string p = directory + "/" + name;
        try {
            if (file_digest(p) != digest.get<std::string>()) bad.push_back(name);
        } catch (...) {
            bad.push_back(name + " (missing)");
        }
    }
    if (root.contains("all_passed") && !root["all_passed"].get<bool>())
        bad.push_back("manifest.json (recorded failures)");
    return bad;
}

}  // namespace crossdiff
