#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace ionphase {

enum class ScanType { contrast, bsb, homodyne };

std::string to_string(ScanType t);
ScanType scan_type_from_string(const std::string& s);

/// File-facing metadata stored next to each record. Frequencies are in Hz and
/// times in seconds, exactly as configured; the 2 pi conversion to rad/s
/// happens once, when the values are turned into drive/sequence parameters.
struct RecordMeta {
  int version = 1;
  std::string scan_type = "contrast";
  std::string success_state = "up";  // which spin state counts as a success
  std::string model = "closed";
  // trap
  double omega_ax_hz = 0.0;
  double eta = 0.0;
  double x0_m = 0.0;
  // drive
  double delta_s_hz = 0.0;
  double delta_hz = 0.0;
  double phase_rad = 0.0;
  int spin_sign = 1;
  double drive_tau_s = std::numeric_limits<double>::infinity();
  // sequence
  double t_wait_s = 0.0;
  double delta_phi_rad = 0.0;
  double seq_tau_s = std::numeric_limits<double>::infinity();
  double fringe_amplitude = 1.0;
  double omega0_hz = 0.0;
  // provenance
  long long shots = 0;
  std::uint64_t seed = 0;
  std::string initial = "ground";
  double nbar = 0.0;
  double displacement_time_s = 0.0;  // bsb/homodyne records
};

nlohmann::json to_json(const RecordMeta& meta);
RecordMeta record_meta_from_json(const nlohmann::json& j);

/// One observable scan: (control variable, shots, successes) per point.
struct MeasurementRecord {
  ScanType scan_type = ScanType::contrast;
  std::vector<double> control;
  std::vector<long long> shots;
  std::vector<long long> successes;
  RecordMeta meta;

  std::size_t size() const { return control.size(); }
  void validate() const;
  /// Success fraction at point i.
  double fraction(std::size_t i) const {
    return static_cast<double>(successes[i]) / static_cast<double>(shots[i]);
  }
};

/// CSV with header "control,shots,successes"; doubles printed with 17
/// significant digits so the round trip is bit exact.
std::string record_to_csv(const MeasurementRecord& record);
MeasurementRecord record_from_csv(const std::string& csv);

void write_record(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path,
                  const MeasurementRecord& record);
MeasurementRecord read_record(const std::filesystem::path& csv_path,
                              const std::filesystem::path& meta_path);

/// Write-then-rename so partial files are never left behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Format a double with enough digits to round-trip exactly.
std::string format_double(double x);

}  // namespace ionphase
