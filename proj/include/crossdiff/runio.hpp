#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossdiff/config.hpp"
#include "crossdiff/diagnostics.hpp"
#include "crossdiff/jko.hpp"

namespace crossdiff {

struct HardCheck {
    std::string name;
    bool passed = true;
    double value = 0.0;
    double threshold = 0.0;
};

struct RunManifest {
    std::string command;
    std::string spec_echo;
    std::string version;
    std::string started_at;
    std::string finished_at;
    std::vector<HardCheck> checks;
    std::vector<std::pair<std::string, std::string>> files;  // name -> digest
    bool continuum_claim = true;  // false carries the no-claim marker
    bool all_passed = true;

    void add_file(const std::string& dir, const std::string& name);
};

/// FNV-1a 64-bit digest of a file's bytes, as a hex string.
std::string file_digest(const std::string& path);

/// Exclusive ownership of a run directory for the duration of one invocation.
class RunLock {
  public:
    explicit RunLock(const std::string& directory);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    std::string path_;
};

std::string format_double(double v);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);
void write_diagnostics_json(const std::string& path, const Trajectory& traj,
                            const std::vector<BoundReport>& bounds, double eps_supp);
void write_manifest(const std::string& path, const RunManifest& manifest);

/// Re-reads a manifest and verifies every listed file digest; returns the
/// names that fail (empty means the stored run is intact).
std::vector<std::string> verify_run_directory(const std::string& directory);

std::string software_version();

}  // namespace crossdiff
