#include "crossdiff/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crossdiff/diagnostics.hpp"

namespace crossdiff {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& accepted) {
    for (const auto& [key, _] : obj.items()) {
        if (!accepted.count(key)) {
            std::string keys;
            for (const auto& k : accepted) keys += (keys.empty() ? "" : ", ") + k;
            fail("unknown key \"" + key + "\" in " + section + "; accepted keys: " + keys);
        }
    }
}

double number_at(const json& obj, const std::string& section, const std::string& key) {
    if (!obj.contains(key)) fail(section + "." + key + " is required");
    const json& v = obj.at(key);
    if (!v.is_number()) fail(section + "." + key + " must be a number");
    return v.get<double>();
}

double number_or(const json& obj, const std::string& section, const std::string& key,
                 double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(section + "." + key + " must be a number");
    return v.get<double>();
}

PotentialSpec parse_potential(const json& p, const std::string& section, double left,
                              double right) {
    if (!p.is_object() || !p.contains("family"))
        fail(section + " must be an object with a \"family\" key");
    const std::string family = p.at("family").get<std::string>();
    if (family == "linear") {
        check_keys(p, section, {"family", "a", "b"});
        return PotentialSpec::linear(number_or(p, section, "a", 0.0),
                                     number_or(p, section, "b", 0.0), left, right);
    }
    if (family == "quadratic") {
        check_keys(p, section, {"family", "a", "b", "c"});
        return PotentialSpec::quadratic(number_or(p, section, "a", 0.0),
                                        number_or(p, section, "b", 0.0),
                                        number_or(p, section, "c", 0.0), left, right);
    }
    if (family == "piecewise_linear") {
        check_keys(p, section, {"family", "x", "y"});
        if (!p.contains("x") || !p.contains("y"))
            fail(section + ": piecewise_linear requires \"x\" and \"y\" lists");
        return PotentialSpec::piecewise_linear(p.at("x").get<std::vector<double>>(),
                                               p.at("y").get<std::vector<double>>(), left,
                                               right);
    }
    fail(section + ".family: unknown family \"" + family +
         "\"; accepted: linear, quadratic, piecewise_linear");
}

}  // namespace

RunSpec parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("config syntax error: ") + e.what());
    }
    if (!root.is_object()) fail("config root must be a JSON object");
    check_keys(root, "config",
               {"grid", "model", "initial", "solver", "studies", "outputs", "seed"});

    RunSpec spec;

    if (!root.contains("grid")) fail("grid section is required");
    const json& jg = root.at("grid");
    check_keys(jg, "grid", {"left", "right", "n_cells"});
    const double left = number_at(jg, "grid", "left");
    const double right = number_at(jg, "grid", "right");
    if (!jg.contains("n_cells") || !jg.at("n_cells").is_number_integer())
        fail("grid.n_cells must be an integer");
    spec.grid = build_grid(left, right, jg.at("n_cells").get<int>());

    if (!root.contains("model")) fail("model section is required");
    const json& jm = root.at("model");
    check_keys(jm, "model", {"m", "kappa", "potentials", "masses", "T", "tau"});
    if (!jm.contains("m")) fail("model.m is required");
    if (jm.at("m").is_string()) {
        if (jm.at("m").get<std::string>() != "infinity")
            fail("model.m: the only accepted string is \"infinity\"");
        spec.model.m = ModelParams::infinite_m();
    } else if (jm.at("m").is_number()) {
        spec.model.m = jm.at("m").get<double>();
        if (!(spec.model.m > 1.0)) fail("model.m must exceed 1 (or be \"infinity\")");
    } else {
        fail("model.m must be a number > 1 or the string \"infinity\"");
    }
    if (jm.contains("kappa")) {
        const auto k = jm.at("kappa").get<std::vector<double>>();
        if (k.size() != 2) fail("model.kappa must hold exactly two positive numbers");
        spec.model.kappa = {k[0], k[1]};
    }
    if (!jm.contains("potentials") || !jm.at("potentials").is_array() ||
        jm.at("potentials").size() != 2)
        fail("model.potentials must be a list of exactly two potential objects");
    spec.model.potentials[0] =
        parse_potential(jm.at("potentials")[0], "model.potentials[0]", left, right);
    spec.model.potentials[1] =
        parse_potential(jm.at("potentials")[1], "model.potentials[1]", left, right);
    if (!jm.contains("masses")) fail("model.masses is required");
    {
        const auto ms = jm.at("masses").get<std::vector<double>>();
        if (ms.size() != 2) fail("model.masses must hold exactly two nonnegative numbers");
        spec.model.masses = {ms[0], ms[1]};
    }
    spec.model.horizon = number_at(jm, "model", "T");
    spec.model.tau = number_at(jm, "model", "tau");
    if (!(spec.model.tau > 0.0)) fail("model.tau must be positive");
    const double ratio = spec.model.horizon / spec.model.tau;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
        fail("model.tau must divide model.T (N = T/tau integer)");
    spec.model.n_steps = static_cast<int>(std::llround(ratio));
    if (spec.model.incompressible() &&
        spec.grid.length() <= spec.model.masses[0] + spec.model.masses[1])
        fail("model.m = \"infinity\" requires the structural mass condition "
             "|Omega| > M1 + M2 (domain length " +
             std::to_string(spec.grid.length()) + " vs total mass " +
             std::to_string(spec.model.masses[0] + spec.model.masses[1]) + ")");

    if (!root.contains("initial")) fail("initial section is required");
    const json& ji = root.at("initial");
    check_keys(ji, "initial", {"kind", "blocks", "values"});
    if (!ji.contains("kind")) fail("initial.kind is required");
    spec.initial_kind = ji.at("kind").get<std::string>();
    if (spec.initial_kind == "blocks") {
        if (!ji.contains("blocks") || !ji.at("blocks").is_array() || ji.at("blocks").size() != 2)
            fail("initial.blocks must list two per-species blocks");
        for (int i = 0; i < 2; ++i) {
            const json& b = ji.at("blocks")[static_cast<std::size_t>(i)];
            const std::string sec = "initial.blocks[" + std::to_string(i) + "]";
            check_keys(b, sec, {"interval", "mass"});
            if (spec.model.masses[static_cast<std::size_t>(i)] <= 0.0) continue;
            const auto iv = b.at("interval").get<std::vector<double>>();
            if (iv.size() != 2 || !(iv[0] < iv[1])) fail(sec + ".interval must be [a, b] with a < b");
            if (iv[0] < left || iv[1] > right) fail(sec + ".interval must lie inside the domain");
            spec.block_lo[static_cast<std::size_t>(i)] = iv[0];
            spec.block_hi[static_cast<std::size_t>(i)] = iv[1];
            const double bm = number_at(b, sec, "mass");
            if (std::abs(bm - spec.model.masses[static_cast<std::size_t>(i)]) >
                1e-9 * std::max(1.0, bm))
                fail(sec + ".mass disagrees with model.masses");
        }
    } else if (spec.initial_kind == "equilibrium") {
        if (spec.model.incompressible())
            fail("initial.kind = \"equilibrium\" requires finite model.m");
    } else if (spec.initial_kind == "custom") {
        if (!ji.contains("values") || !ji.at("values").is_array() || ji.at("values").size() != 2)
            fail("initial.values must hold two per-cell lists");
        for (int i = 0; i < 2; ++i) {
            spec.custom_values[static_cast<std::size_t>(i)] =
                ji.at("values")[static_cast<std::size_t>(i)].get<std::vector<double>>();
            if (static_cast<int>(spec.custom_values[static_cast<std::size_t>(i)].size()) !=
                spec.grid.n_cells)
                fail("initial.values[" + std::to_string(i) + "] must hold grid.n_cells entries");
        }
    } else {
        fail("initial.kind: unknown kind \"" + spec.initial_kind +
             "\"; accepted: blocks, equilibrium, custom");
    }

    if (root.contains("solver")) {
        const json& js = root.at("solver");
        check_keys(js, "solver", {"inner_tol", "max_inner", "step_rule", "support_floor"});
        spec.solver.inner_tol = number_or(js, "solver", "inner_tol", spec.solver.inner_tol);
        if (js.contains("max_inner")) spec.solver.max_inner = js.at("max_inner").get<int>();
        if (js.contains("step_rule")) spec.solver.step_rule = js.at("step_rule").get<std::string>();
        spec.solver.support_floor =
            number_or(js, "solver", "support_floor", spec.solver.support_floor);
    }
    spec.solver.validate();

    if (root.contains("studies")) {
        const json& js = root.at("studies");
        check_keys(js, "studies", {"tau_refinement", "m_sweep"});
        if (js.contains("tau_refinement")) {
            const int levels = js.at("tau_refinement").get<int>();
            if (levels < 2) fail("studies.tau_refinement must be at least 2 levels");
            spec.studies.tau_levels = levels;
        }
        if (js.contains("m_sweep")) {
            if (!js.at("m_sweep").is_array() || js.at("m_sweep").empty())
                fail("studies.m_sweep must be a nonempty list");
            for (const json& v : js.at("m_sweep")) {
                if (v.is_string()) {
                    if (v.get<std::string>() != "infinity")
                        fail("studies.m_sweep: entries are numbers > 1 or \"infinity\"");
                    spec.studies.m_sweep.push_back(ModelParams::infinite_m());
                } else {
                    const double m = v.get<double>();
                    if (!(m > 1.0)) fail("studies.m_sweep: entries must exceed 1");
                    spec.studies.m_sweep.push_back(m);
                }
            }
        }
    }

    if (root.contains("outputs")) {
        const json& jo = root.at("outputs");
        check_keys(jo, "outputs", {"directory", "formats", "plots"});
        if (jo.contains("directory")) spec.outputs.directory = jo.at("directory").get<std::string>();
        if (jo.contains("formats")) {
            spec.outputs.csv = false;
            spec.outputs.json = false;
            for (const json& f : jo.at("formats")) {
                const std::string fmt = f.get<std::string>();
                if (fmt == "csv")
                    spec.outputs.csv = true;
                else if (fmt == "json")
                    spec.outputs.json = true;
                else
                    fail("outputs.formats: unknown format \"" + fmt + "\"; accepted: csv, json");
            }
        }
        if (jo.contains("plots")) spec.outputs.plots = jo.at("plots").get<bool>();
    }
    if (root.contains("seed")) spec.seed = root.at("seed").get<std::uint64_t>();

    spec.echo = root.dump(2);
    return spec;
}

RunSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

DensityPair build_initial(const RunSpec& spec) {
    const Grid& g = spec.grid;
    auto species_field = [&](int i) {
        const double mass = spec.model.masses[static_cast<std::size_t>(i)];
        if (mass <= 0.0) return DensityField::zero(g);
        return DensityField::block(g, spec.block_lo[static_cast<std::size_t>(i)],
                                   spec.block_hi[static_cast<std::size_t>(i)], mass);
    };
    if (spec.initial_kind == "blocks") return DensityPair(species_field(0), species_field(1));
    if (spec.initial_kind == "equilibrium") return equilibrium(spec.model, g).pair;
    // custom
    DensityField f1(g, spec.custom_values[0]);
    DensityField f2(g, spec.custom_values[1]);
    for (int i = 0; i < 2; ++i) {
        const double got = (i == 0) ? f1.mass() : f2.mass();
        const double want = spec.model.masses[static_cast<std::size_t>(i)];
        if (std::abs(got - want) > 1e-6 * std::max(1.0, want))
            throw std::invalid_argument("initial.values[" + std::to_string(i) +
                                        "] mass disagrees with model.masses");
    }
    return DensityPair(std::move(f1), std::move(f2));
}

bool stable_configuration(const RunSpec& spec, const DensityPair& initial) {
    const Grid& g = spec.grid;
    for (int j = 0; j < g.n_cells; ++j) {
        const double x = g.x_center(j);
        if (spec.model.potentials[1].slope(x) < spec.model.potentials[0].slope(x) - 1e-12)
            return false;
    }
    if (!spec.model.species_active(0) || !spec.model.species_active(1)) return true;
    const OrderingReport ord = ordering_check(initial, spec.solver.support_floor);
    return ord.vacuous || (ord.ordered && overlap_measure(initial, spec.solver.support_floor) <=
                                              g.h * (1.0 + 1e-9));
}

}  // namespace crossdiff
