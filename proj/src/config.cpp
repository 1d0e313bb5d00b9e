#include "ionphase/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ionphase/errors.hpp"
#include "ionphase/record.hpp"

namespace ionphase {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void reject_unknown(const nlohmann::json& obj, const std::string& path,
                    const std::set<std::string>& known) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (!known.count(key)) fail(path + "." + key, "unknown key");
}

const nlohmann::json& require(const nlohmann::json& obj, const std::string& path,
                              const std::string& key) {
  if (!obj.contains(key)) fail(path + "." + key, "missing required key");
  return obj.at(key);
}

double number(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

double positive(const nlohmann::json& v, const std::string& path) {
  const double x = number(v, path);
  if (!(x > 0.0)) fail(path, "expected a number > 0");
  return x;
}

std::string text(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

double tau_or_inf(const nlohmann::json& obj, const std::string& path) {
  if (!obj.contains("tau_s") || obj.at("tau_s").is_null())
    return std::numeric_limits<double>::infinity();
  return positive(obj.at("tau_s"), path + ".tau_s");
}

GridSpec grid_spec(const nlohmann::json& v, const std::string& path) {
  reject_unknown(v, path, {"start_s", "stop_s", "step_s"});
  GridSpec g;
  g.start = number(require(v, path, "start_s"), path + ".start_s");
  g.stop = number(require(v, path, "stop_s"), path + ".stop_s");
  g.step = positive(require(v, path, "step_s"), path + ".step_s");
  if (g.start < 0.0) fail(path + ".start_s", "must be >= 0");
  if (!(g.stop > g.start)) fail(path + ".stop_s", "must be > start_s");
  return g;
}

}  // namespace

std::vector<double> GridSpec::points() const {
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(start + i * step);
  return out;
}

nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(content.size(), e.byte); ++i)
      if (content[i] == '\n') ++line;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

ExperimentConfig parse_experiment_config(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  cfg.raw = doc;
  const std::string root = "$";
  reject_unknown(doc, root,
                 {"version", "description", "scan", "model", "seed", "shots", "trap", "drive",
                  "sequence", "initial", "grid", "displacement", "probe", "phase_points",
                  "output", "evolve"});

  cfg.version = require(doc, root, "version").get<int>();
  if (cfg.version != 1) fail("$.version", "unsupported config version");

  const std::string scan = text(require(doc, root, "scan"), "$.scan");
  try {
    cfg.scan = scan_type_from_string(scan);
  } catch (const std::invalid_argument& e) {
    fail("$.scan", e.what());
  }
  const std::string model = text(require(doc, root, "model"), "$.model");
  try {
    cfg.model = dynamics_model_from_string(model);
  } catch (const std::invalid_argument& e) {
    fail("$.model", e.what());
  }

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
      fail("$.seed", "expected an integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  const auto& shots = require(doc, root, "shots");
  if (!shots.is_number_integer() && !shots.is_number_unsigned())
    fail("$.shots", "expected an integer");
  cfg.shots = shots.get<long long>();
  if (cfg.shots < 1) fail("$.shots", "must be >= 1");

  const auto& trap = require(doc, root, "trap");
  reject_unknown(trap, "$.trap", {"omega_ax_hz", "eta", "x0_m"});
  cfg.trap.omega_ax = kTwoPi * positive(require(trap, "$.trap", "omega_ax_hz"), "$.trap.omega_ax_hz");
  cfg.trap.eta = number(require(trap, "$.trap", "eta"), "$.trap.eta");
  if (trap.contains("x0_m")) cfg.trap.x0 = positive(trap["x0_m"], "$.trap.x0_m");
  try {
    cfg.trap.validate();
  } catch (const std::invalid_argument& e) {
    fail("$.trap", e.what());
  }

  const auto& drive = require(doc, root, "drive");
  reject_unknown(drive, "$.drive", {"delta_s_hz", "delta_hz", "phase_rad", "spin_sign", "tau_s"});
  cfg.drive.delta_s = kTwoPi * number(require(drive, "$.drive", "delta_s_hz"), "$.drive.delta_s_hz");
  cfg.drive.delta = kTwoPi * number(require(drive, "$.drive", "delta_hz"), "$.drive.delta_hz");
  cfg.drive.phase = drive.contains("phase_rad") ? number(drive["phase_rad"], "$.drive.phase_rad") : 0.0;
  cfg.drive.spin_sign = drive.contains("spin_sign") ? drive["spin_sign"].get<int>() : 1;
  cfg.drive.tau = tau_or_inf(drive, "$.drive");
  cfg.drive.eta = cfg.trap.eta;
  cfg.drive.omega_ax = cfg.trap.omega_ax;
  try {
    cfg.drive.validate();
  } catch (const std::invalid_argument& e) {
    fail("$.drive", e.what());
  }

  if (doc.contains("sequence")) {
    const auto& seq = doc["sequence"];
    reject_unknown(seq, "$.sequence",
                   {"t_wait_s", "delta_phi_rad", "tau_s", "fringe_amplitude", "omega0_hz"});
    if (seq.contains("t_wait_s")) cfg.sequence.t_wait = number(seq["t_wait_s"], "$.sequence.t_wait_s");
    if (seq.contains("delta_phi_rad"))
      cfg.sequence.delta_phi = number(seq["delta_phi_rad"], "$.sequence.delta_phi_rad");
    cfg.sequence.tau = tau_or_inf(seq, "$.sequence");
    if (seq.contains("fringe_amplitude"))
      cfg.sequence.fringe_amplitude = number(seq["fringe_amplitude"], "$.sequence.fringe_amplitude");
    if (seq.contains("omega0_hz"))
      cfg.sequence.omega0 = kTwoPi * positive(seq["omega0_hz"], "$.sequence.omega0_hz");
    try {
      cfg.sequence.validate();
    } catch (const std::invalid_argument& e) {
      fail("$.sequence", e.what());
    }
  }

  const auto& initial = require(doc, root, "initial");
  reject_unknown(initial, "$.initial", {"type", "nbar"});
  cfg.initial = text(require(initial, "$.initial", "type"), "$.initial.type");
  if (cfg.initial == "thermal") {
    cfg.nbar = number(require(initial, "$.initial", "nbar"), "$.initial.nbar");
    if (cfg.nbar < 0.0) fail("$.initial.nbar", "must be >= 0");
  } else if (cfg.initial != "ground") {
    fail("$.initial.type", "expected 'ground' or 'thermal'");
  }

  switch (cfg.scan) {
    case ScanType::contrast:
      cfg.grid = grid_spec(require(doc, root, "grid"), "$.grid");
      break;
    case ScanType::bsb:
      cfg.displacement_grid = grid_spec(require(doc, root, "displacement"), "$.displacement");
      cfg.probe_grid = grid_spec(require(doc, root, "probe"), "$.probe");
      break;
    case ScanType::homodyne:
      cfg.displacement_grid = grid_spec(require(doc, root, "displacement"), "$.displacement");
      if (doc.contains("phase_points")) {
        cfg.phase_points = doc["phase_points"].get<int>();
        if (cfg.phase_points < 8) fail("$.phase_points", "must be >= 8");
      }
      break;
  }
  if (cfg.scan == ScanType::bsb && !(cfg.sequence.omega0 > 0.0))
    fail("$.sequence.omega0_hz", "required for bsb scans");

  const auto& output = require(doc, root, "output");
  reject_unknown(output, "$.output", {"prefix"});
  cfg.output_prefix = text(require(output, "$.output", "prefix"), "$.output.prefix");

  if (doc.contains("evolve")) {
    const auto& ev = doc["evolve"];
    reject_unknown(ev, "$.evolve", {"dt_s", "n_max", "check_steps"});
    if (ev.contains("dt_s")) cfg.evolve.dt = positive(ev["dt_s"], "$.evolve.dt_s");
    if (ev.contains("n_max")) {
      cfg.evolve.n_max = ev["n_max"].get<int>();
      if (cfg.evolve.n_max < 1) fail("$.evolve.n_max", "must be >= 1");
    }
    if (ev.contains("check_steps")) cfg.evolve.check_steps = ev["check_steps"].get<bool>();
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  try {
    return parse_experiment_config(parse_json_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());  // an unreadable config file is a config error
  }
}

std::string emit_config(const ExperimentConfig& cfg) { return cfg.raw.dump(2) + "\n"; }

RecordMeta ExperimentConfig::base_meta() const {
  RecordMeta m;
  m.scan_type = ionphase::to_string(scan);
  m.model = ionphase::to_string(model);
  m.success_state = scan == ScanType::bsb ? "down" : "up";
  m.omega_ax_hz = trap.omega_ax / kTwoPi;
  m.eta = trap.eta;
  m.x0_m = trap.x0;
  m.delta_s_hz = drive.delta_s / kTwoPi;
  m.delta_hz = drive.delta / kTwoPi;
  m.phase_rad = drive.phase;
  m.spin_sign = drive.spin_sign;
  m.drive_tau_s = drive.tau;
  m.t_wait_s = sequence.t_wait;
  m.delta_phi_rad = sequence.delta_phi;
  m.seq_tau_s = sequence.tau;
  m.fringe_amplitude = sequence.fringe_amplitude;
  m.omega0_hz = sequence.omega0 / kTwoPi;
  m.shots = shots;
  m.seed = seed;
  m.initial = initial;
  m.nbar = nbar;
  return m;
}

FitJob parse_fit_job(const nlohmann::json& doc) {
  FitJob job;
  job.raw = doc;
  reject_unknown(doc, "$",
                 {"version", "description", "fit", "dataset", "index", "n_max", "ga", "omega0_hint_hz",
                  "model", "free", "output"});
  job.version = require(doc, "$", "version").get<int>();
  if (job.version != 1) fail("$.version", "unsupported config version");
  job.kind = text(require(doc, "$", "fit"), "$.fit");
  const std::set<std::string> kinds{"phonons", "bsb_series", "homodyne_series", "contrast"};
  if (!kinds.count(job.kind)) fail("$.fit", "expected phonons|bsb_series|homodyne_series|contrast");

  if (doc.contains("dataset")) job.dataset = text(doc["dataset"], "$.dataset");
  if (doc.contains("index")) job.dataset = text(doc["index"], "$.index");
  if (job.dataset.empty()) fail("$.dataset", "missing dataset (or index) path");

  if (doc.contains("n_max")) {
    job.ga.n_max = doc["n_max"].get<int>();
    if (job.ga.n_max < 1) fail("$.n_max", "must be >= 1");
  }
  if (doc.contains("ga")) {
    const auto& ga = doc["ga"];
    reject_unknown(ga, "$.ga",
                   {"population", "generations", "mutation_scale", "crossover_rate", "elite_count",
                    "seed", "bootstrap_resamples"});
    if (ga.contains("population")) job.ga.population = ga["population"].get<int>();
    if (ga.contains("generations")) job.ga.generations = ga["generations"].get<int>();
    if (ga.contains("mutation_scale")) job.ga.mutation_scale = number(ga["mutation_scale"], "$.ga.mutation_scale");
    if (ga.contains("crossover_rate")) job.ga.crossover_rate = number(ga["crossover_rate"], "$.ga.crossover_rate");
    if (ga.contains("elite_count")) job.ga.elite_count = ga["elite_count"].get<int>();
    if (ga.contains("seed")) job.ga.seed = ga["seed"].get<std::uint64_t>();
    if (ga.contains("bootstrap_resamples"))
      job.ga.bootstrap_resamples = ga["bootstrap_resamples"].get<int>();
    try {
      job.ga.validate();
    } catch (const std::invalid_argument& e) {
      fail("$.ga", e.what());
    }
  }
  if (doc.contains("omega0_hint_hz"))
    job.omega0_hint_hz = positive(doc["omega0_hint_hz"], "$.omega0_hint_hz");
  if (doc.contains("model")) {
    try {
      job.contrast_model = contrast_model_from_string(text(doc["model"], "$.model"));
    } catch (const std::invalid_argument& e) {
      fail("$.model", e.what());
    }
  }
  if (doc.contains("free")) {
    if (!doc["free"].is_array()) fail("$.free", "expected an array of parameter names");
    for (const auto& v : doc["free"]) job.free_params.insert(text(v, "$.free[]"));
  }
  if (doc.contains("output")) {
    const auto& output = doc["output"];
    reject_unknown(output, "$.output", {"prefix"});
    job.output_prefix = text(require(output, "$.output", "prefix"), "$.output.prefix");
  }
  return job;
}

FitJob load_fit_job(const std::filesystem::path& path) {
  try {
    return parse_fit_job(parse_json_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace ionphase
