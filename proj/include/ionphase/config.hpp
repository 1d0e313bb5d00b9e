#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ionphase/dynamics.hpp"
#include "ionphase/fock.hpp"
#include "ionphase/observables.hpp"
#include "ionphase/reconstruct.hpp"

namespace ionphase {

/// A uniform scan grid given in the config as {start_s, stop_s, step_s}.
struct GridSpec {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  std::vector<double> points() const;
};

/// Parsed simulation configuration. Frequencies come in as Hz and are
/// converted to rad/s exactly once, here; the raw document is kept so that
/// emitting a parsed config reproduces it byte for byte.
struct ExperimentConfig {
  int version = 1;
  ScanType scan = ScanType::contrast;
  DynamicsModel model = DynamicsModel::closed;
  std::uint64_t seed = 1;
  long long shots = 200;
  TrapParams trap;
  DriveParams drive;        // rad/s
  SequenceParams sequence;  // rad/s
  std::string initial = "ground";
  double nbar = 0.0;
  GridSpec grid;                        // contrast scan
  GridSpec displacement_grid;           // bsb / homodyne displacement times
  GridSpec probe_grid;                  // bsb probe times
  int phase_points = 48;                // homodyne fringe sampling
  std::string output_prefix = "scan";
  EvolveOptions evolve;

  nlohmann::json raw;

  RecordMeta base_meta() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string emit_config(const ExperimentConfig& cfg);

/// Reconstruction job description (the --config of `ionphase reconstruct`).
struct FitJob {
  int version = 1;
  std::string kind;              // phonons | bsb_series | homodyne_series | contrast
  std::filesystem::path dataset; // record prefix (phonons, contrast) or index file
  GAConfig ga;
  std::optional<double> omega0_hint_hz;
  ContrastModel contrast_model = ContrastModel::ground;
  std::set<std::string> free_params;
  std::string output_prefix = "fit";

  nlohmann::json raw;
};

FitJob parse_fit_job(const nlohmann::json& doc);
FitJob load_fit_job(const std::filesystem::path& path);

/// Parse a JSON document, mapping parse failures to ConfigError with the
/// byte offset and approximate line number.
nlohmann::json parse_json_file(const std::filesystem::path& path);

}  // namespace ionphase
