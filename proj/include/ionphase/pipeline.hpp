#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ionphase/config.hpp"

namespace ionphase {

/// Dataset written by one `simulate` run: record files plus the noiseless
/// truth curve. Paths are relative to the output directory.
struct SimulateResult {
  std::vector<std::filesystem::path> files;
  nlohmann::json index;  // for bsb/homodyne scans; empty object otherwise
};

SimulateResult run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                            int threads = 1);

struct ReconstructResult {
  std::vector<std::filesystem::path> files;
  nlohmann::json summary;
  bool converged = true;
};

ReconstructResult run_reconstruct(const FitJob& job, const std::filesystem::path& out_dir,
                                  int threads = 1);

/// Oracle-equivalence, unitarity, Lamb-Dicke-limit and step-convergence
/// suites; prints one pass/fail line per suite. dt_override > 0 forces the
/// step-convergence suite to use that integrator step. Returns the number of
/// failed suites.
int run_selftest(std::ostream& out, double dt_override = 0.0);

}  // namespace ionphase
