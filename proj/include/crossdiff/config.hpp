#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossdiff/jko.hpp"

namespace crossdiff {

struct OutputOptions {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
    bool plots = false;
};

struct StudyOptions {
    std::optional<int> tau_levels;
    std::vector<double> m_sweep;  // entries > 1, infinity allowed
};

/// Parsed and validated run configuration.
struct RunSpec {
    Grid grid;
    ModelParams model;
    std::string initial_kind;  // "blocks" | "equilibrium" | "custom"
    std::array<double, 2> block_lo{0.0, 0.0};
    std::array<double, 2> block_hi{0.0, 0.0};
    std::array<std::vector<double>, 2> custom_values;
    SolverConfig solver;
    StudyOptions studies;
    OutputOptions outputs;
    std::uint64_t seed = 0;
    std::string echo;  // canonical serialization of the accepted config
};

RunSpec parse_config(const std::string& path);
RunSpec parse_config_text(const std::string& text);

DensityPair build_initial(const RunSpec& spec);

/// True when the configuration satisfies the stable 1D framework: ordered
/// drifts (Phi2' >= Phi1' on the grid) and species 2 initially supported to
/// the left of species 1.
bool stable_configuration(const RunSpec& spec, const DensityPair& initial);

}  // namespace crossdiff
