#include "ionphase/record.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ionphase/errors.hpp"

namespace ionphase {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void put_tau(nlohmann::json& j, const char* key, double tau) {
  if (std::isinf(tau))
    j[key] = nullptr;  // JSON has no infinity; null means "no decay"
  else
    j[key] = tau;
}

double get_tau(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kInf;
  return j.at(key).get<double>();
}

}  // namespace

std::string to_string(ScanType t) {
  switch (t) {
    case ScanType::contrast: return "contrast";
    case ScanType::bsb: return "bsb";
    case ScanType::homodyne: return "homodyne";
  }
  return "?";
}

ScanType scan_type_from_string(const std::string& s) {
  if (s == "contrast") return ScanType::contrast;
  if (s == "bsb") return ScanType::bsb;
  if (s == "homodyne") return ScanType::homodyne;
  throw std::invalid_argument("unknown scan type: " + s);
}

nlohmann::json to_json(const RecordMeta& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["scan_type"] = m.scan_type;
  j["success_state"] = m.success_state;
  j["model"] = m.model;
  j["trap"] = {{"omega_ax_hz", m.omega_ax_hz}, {"eta", m.eta}, {"x0_m", m.x0_m}};
  nlohmann::json drive = {{"delta_s_hz", m.delta_s_hz},
                          {"delta_hz", m.delta_hz},
                          {"phase_rad", m.phase_rad},
                          {"spin_sign", m.spin_sign}};
  put_tau(drive, "tau_s", m.drive_tau_s);
  j["drive"] = drive;
  nlohmann::json seq = {{"t_wait_s", m.t_wait_s},
                        {"delta_phi_rad", m.delta_phi_rad},
                        {"fringe_amplitude", m.fringe_amplitude},
                        {"omega0_hz", m.omega0_hz}};
  put_tau(seq, "tau_s", m.seq_tau_s);
  j["sequence"] = seq;
  j["shots"] = m.shots;
  j["seed"] = m.seed;
  j["initial"] = m.initial;
  j["nbar"] = m.nbar;
  j["displacement_time_s"] = m.displacement_time_s;
  return j;
}

RecordMeta record_meta_from_json(const nlohmann::json& j) {
  try {
    RecordMeta m;
    m.version = j.at("version").get<int>();
    m.scan_type = j.at("scan_type").get<std::string>();
    m.success_state = j.at("success_state").get<std::string>();
    m.model = j.at("model").get<std::string>();
    const auto& trap = j.at("trap");
    m.omega_ax_hz = trap.at("omega_ax_hz").get<double>();
    m.eta = trap.at("eta").get<double>();
    m.x0_m = trap.value("x0_m", 0.0);
    const auto& drive = j.at("drive");
    m.delta_s_hz = drive.at("delta_s_hz").get<double>();
    m.delta_hz = drive.at("delta_hz").get<double>();
    m.phase_rad = drive.at("phase_rad").get<double>();
    m.spin_sign = drive.at("spin_sign").get<int>();
    m.drive_tau_s = get_tau(drive, "tau_s");
    const auto& seq = j.at("sequence");
    m.t_wait_s = seq.at("t_wait_s").get<double>();
    m.delta_phi_rad = seq.at("delta_phi_rad").get<double>();
    m.fringe_amplitude = seq.at("fringe_amplitude").get<double>();
    m.omega0_hz = seq.at("omega0_hz").get<double>();
    m.seq_tau_s = get_tau(seq, "tau_s");
    m.shots = j.at("shots").get<long long>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.initial = j.at("initial").get<std::string>();
    m.nbar = j.at("nbar").get<double>();
    m.displacement_time_s = j.at("displacement_time_s").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("record meta: ") + e.what());
  }
}

void MeasurementRecord::validate() const {
  if (control.size() != shots.size() || control.size() != successes.size())
    throw std::invalid_argument("MeasurementRecord: array lengths differ");
  for (std::size_t i = 0; i < control.size(); ++i) {
    if (shots[i] < 1) throw std::invalid_argument("MeasurementRecord: shots must be >= 1");
    if (successes[i] < 0 || successes[i] > shots[i])
      throw std::invalid_argument("MeasurementRecord: successes outside [0, shots]");
  }
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string record_to_csv(const MeasurementRecord& record) {
  record.validate();
  std::string out = "control,shots,successes\n";
  for (std::size_t i = 0; i < record.size(); ++i) {
    out += format_double(record.control[i]);
    out += ',';
    out += std::to_string(record.shots[i]);
    out += ',';
    out += std::to_string(record.successes[i]);
    out += '\n';
  }
  return out;
}

MeasurementRecord record_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw IoError("record csv: empty file");
  if (line == "control,shots,successes\r") line.pop_back();
  if (line != "control,shots,successes")
    throw IoError("record csv: bad header '" + line + "'");
  MeasurementRecord rec;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw IoError("record csv: line " + std::to_string(lineno) + ": expected 3 fields");
    char* end = nullptr;
    const std::string f0 = line.substr(0, c1);
    const std::string f1 = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string f2 = line.substr(c2 + 1);
    const double control = std::strtod(f0.c_str(), &end);
    if (end == f0.c_str() || *end != '\0')
      throw IoError("record csv: line " + std::to_string(lineno) + ": bad control value");
    const long long shots = std::strtoll(f1.c_str(), &end, 10);
    if (end == f1.c_str() || *end != '\0')
      throw IoError("record csv: line " + std::to_string(lineno) + ": bad shots value");
    std::string f2t = f2;
    while (!f2t.empty() && (f2t.back() == '\r' || f2t.back() == ' ')) f2t.pop_back();
    const long long successes = std::strtoll(f2t.c_str(), &end, 10);
    if (end == f2t.c_str() || *end != '\0')
      throw IoError("record csv: line " + std::to_string(lineno) + ": bad successes value");
    rec.control.push_back(control);
    rec.shots.push_back(shots);
    rec.successes.push_back(successes);
  }
  if (rec.control.empty()) throw IoError("record csv: no data rows");
  try {
    rec.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("record csv: ") + e.what());
  }
  return rec;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_record(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path,
                  const MeasurementRecord& record) {
  write_file_atomic(csv_path, record_to_csv(record));
  write_file_atomic(meta_path, to_json(record.meta).dump(2) + "\n");
}

MeasurementRecord read_record(const std::filesystem::path& csv_path,
                              const std::filesystem::path& meta_path) {
  MeasurementRecord rec = record_from_csv(read_file(csv_path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("record meta " + meta_path.string() + ": " + e.what());
  }
  rec.meta = record_meta_from_json(j);
  rec.scan_type = scan_type_from_string(rec.meta.scan_type);
  return rec;
}

}  // namespace ionphase
