#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crossdiff/diagnostics.hpp"
#include "crossdiff/interp.hpp"
#include "crossdiff/jko.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace crossdiff;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "1D two-species cross-diffusion laboratory (JKO time stepping)";

    py::class_<Grid>(m, "Grid")
        .def_readonly("left", &Grid::left)
        .def_readonly("right", &Grid::right)
        .def_readonly("n_cells", &Grid::n_cells)
        .def_readonly("h", &Grid::h)
        .def("x_center", &Grid::x_center)
        .def("centers", [](const Grid& g) {
            std::vector<double> xs(static_cast<std::size_t>(g.n_cells));
            for (int j = 0; j < g.n_cells; ++j) xs[static_cast<std::size_t>(j)] = g.x_center(j);
            return to_array(xs);
        });
    m.def("build_grid", &build_grid, py::arg("left"), py::arg("right"), py::arg("n_cells"));

    py::class_<DensityField>(m, "DensityField")
        .def(py::init([](const Grid& g, const std::vector<double>& values) {
                 return DensityField(g, values);
             }),
             py::arg("grid"), py::arg("values"))
        .def_static("block", &DensityField::block, py::arg("grid"), py::arg("a"), py::arg("b"),
                    py::arg("mass"))
        .def_static("zero", &DensityField::zero)
        .def_property_readonly("grid", &DensityField::grid)
        .def_property_readonly("mass", &DensityField::mass)
        .def_property_readonly("values",
                               [](const DensityField& f) { return to_array(f.values()); });

    py::class_<DensityPair>(m, "DensityPair")
        .def(py::init<DensityField, DensityField>(), py::arg("rho1"), py::arg("rho2"))
        .def_readonly("rho1", &DensityPair::rho1)
        .def_readonly("rho2", &DensityPair::rho2)
        .def("total", [](const DensityPair& p) { return to_array(p.total()); });

    py::class_<PotentialField>(m, "PotentialField")
        .def_property_readonly("values",
                               [](const PotentialField& f) { return to_array(f.values); });

    py::class_<PotentialSpec>(m, "PotentialSpec")
        .def_static("linear", &PotentialSpec::linear, py::arg("a"), py::arg("b"), py::arg("left"),
                    py::arg("right"))
        .def_static("quadratic", &PotentialSpec::quadratic, py::arg("a"), py::arg("b"),
                    py::arg("c"), py::arg("left"), py::arg("right"))
        .def_static("piecewise_linear", &PotentialSpec::piecewise_linear, py::arg("x"),
                    py::arg("y"), py::arg("left"), py::arg("right"))
        .def("value", &PotentialSpec::value)
        .def("slope", &PotentialSpec::slope)
        .def_property_readonly("sup_norm", &PotentialSpec::sup_norm)
        .def_property_readonly("slope_sup_norm", &PotentialSpec::slope_sup_norm);

    m.def("w2_distance", &w2_distance, py::arg("rho"), py::arg("nu"));
    m.def("w2_squared", &w2_squared, py::arg("rho"), py::arg("nu"));
    m.def("quantile", &quantile, py::arg("rho"), py::arg("s"));
    m.def("mccann_interpolate", &mccann_interpolate, py::arg("rho_from"), py::arg("rho_to"),
          py::arg("t"));
    m.def(
        "kantorovich_potential",
        [](const DensityField& rho, const DensityField& nu) {
            return to_array(kantorovich_potential(rho, nu).values);
        },
        py::arg("rho"), py::arg("nu"));
    m.def(
        "monotone_map_at",
        [](const DensityField& rho, const DensityField& nu, const std::vector<double>& xs) {
            TransportMap1D map = monotone_map(rho, nu);
            std::vector<double> ys(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = map.apply(xs[i]);
            return to_array(ys);
        },
        py::arg("rho"), py::arg("nu"), py::arg("x"));

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init([](double m_exp, std::pair<double, double> kappa,
                         const PotentialSpec& phi1, const PotentialSpec& phi2,
                         std::pair<double, double> masses, double T, double tau) {
                 ModelParams p;
                 p.m = m_exp;
                 p.kappa = {kappa.first, kappa.second};
                 p.potentials = {phi1, phi2};
                 p.masses = {masses.first, masses.second};
                 p.horizon = T;
                 p.tau = tau;
                 p.n_steps = static_cast<int>(std::llround(T / tau));
                 return p;
             }),
             py::arg("m"), py::arg("kappa"), py::arg("phi1"), py::arg("phi2"), py::arg("masses"),
             py::arg("T"), py::arg("tau"))
        .def_readonly("m", &ModelParams::m)
        .def_readonly("tau", &ModelParams::tau)
        .def_readonly("n_steps", &ModelParams::n_steps)
        .def_property_readonly("incompressible", &ModelParams::incompressible);
    m.attr("INFINITY_M") = std::numeric_limits<double>::infinity();

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("inner_tol", &SolverConfig::inner_tol)
        .def_readwrite("max_inner", &SolverConfig::max_inner)
        .def_readwrite("step_rule", &SolverConfig::step_rule)
        .def_readwrite("support_floor", &SolverConfig::support_floor);

    py::class_<JkoStepResult>(m, "JkoStepResult")
        .def_readonly("pair", &JkoStepResult::pair)
        .def_readonly("w2sq", &JkoStepResult::w2sq)
        .def_readonly("optimality_residual", &JkoStepResult::optimality_residual)
        .def_readonly("inner_iterations", &JkoStepResult::inner_iterations)
        .def_readonly("converged", &JkoStepResult::converged)
        .def_readonly("complementarity", &JkoStepResult::complementarity)
        .def_property_readonly("pressure",
                               [](const JkoStepResult& r) { return to_array(r.pressure.values); });

    m.def("jko_step", &jko_step, py::arg("prev"), py::arg("params"), py::arg("solver"));
    m.def(
        "jko_step_incompressible",
        [](const DensityPair& prev, const ModelParams& params, const SolverConfig& solver) {
            return jko_step_incompressible(prev, params, solver);
        },
        py::arg("prev"), py::arg("params"), py::arg("solver"));
    m.def(
        "explicit_transport_step",
        [](const DensityPair& prev, const ModelParams& params) {
            return explicit_transport_step(prev, params);
        },
        py::arg("prev"), py::arg("params"));

    py::class_<EnergyReport>(m, "EnergyReport")
        .def_readonly("internal", &EnergyReport::internal)
        .def_readonly("potential", &EnergyReport::potential)
        .def_readonly("total", &EnergyReport::total)
        .def_readonly("feasible", &EnergyReport::feasible);
    m.def("energy_report", &energy_report, py::arg("pair"), py::arg("params"));
    m.def(
        "pressure_law",
        [](const DensityPair& pair, double m_exp) {
            return to_array(pressure_finite_m(pair, m_exp).values);
        },
        py::arg("pair"), py::arg("m"));

    py::class_<EquilibriumResult>(m, "EquilibriumResult")
        .def_readonly("pair", &EquilibriumResult::pair)
        .def_readonly("constants", &EquilibriumResult::constants)
        .def_readonly("degenerate", &EquilibriumResult::degenerate)
        .def_readonly("multi_component", &EquilibriumResult::multi_component);
    m.def("equilibrium", &equilibrium, py::arg("params"), py::arg("grid"));

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("pairs", &Trajectory::pairs)
        .def_readonly("failed_steps", &Trajectory::failed_steps)
        .def_property_readonly("n_steps", &Trajectory::n_steps)
        .def("energy",
             [](const Trajectory& t) {
                 std::vector<double> es;
                 for (const auto& e : t.energies) es.push_back(e.total);
                 return to_array(es);
             })
        .def("pressure",
             [](const Trajectory& t, int k) {
                 return to_array(t.steps.at(static_cast<std::size_t>(k)).pressure.values);
             })
        .def("state", [](const Trajectory& t, int k) {
            return t.pairs.at(static_cast<std::size_t>(k));
        });
    m.def("run_trajectory", &run_trajectory, py::arg("initial"), py::arg("params"),
          py::arg("solver"));

    m.def("overlap_measure", &overlap_measure, py::arg("pair"), py::arg("eps"));
    m.def("patch_deviation", &patch_deviation, py::arg("rho"), py::arg("eps"));
    m.def(
        "saturation_tail",
        [](const DensityPair& pair, double delta) {
            return saturation_tail(DensityField(pair.grid(), pair.total()), delta);
        },
        py::arg("pair"), py::arg("delta"));
    m.def(
        "ordering_gap",
        [](const DensityPair& pair, double eps) {
            const OrderingReport r = ordering_check(pair, eps);
            return py::make_tuple(r.ordered, r.gap);
        },
        py::arg("pair"), py::arg("eps"));

#ifdef VERSION_INFO
    m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
    m.attr("__version__") = "dev";
#endif
}
