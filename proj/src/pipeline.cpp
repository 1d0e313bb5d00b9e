#include "ionphase/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ionphase/errors.hpp"
#include "ionphase/observables.hpp"
#include "ionphase/operators.hpp"
#include "ionphase/peaks.hpp"
#include "ionphase/record.hpp"
#include "ionphase/reconstruct.hpp"
#include "ionphase/rng.hpp"

namespace ionphase {

namespace {

namespace fs = std::filesystem;
constexpr double kTwoPi = 6.283185307179586476925286766559;

MeasurementRecord sample_grid(const std::vector<double>& controls, const Eigen::VectorXd& probs,
                              long long shots, std::uint64_t seed, ScanType scan) {
  auto curve = [&](double c) {
    const auto it = std::lower_bound(controls.begin(), controls.end(), c - 1e-15);
    return probs[std::distance(controls.begin(), it)];
  };
  return sample_record(curve, controls, shots, seed, scan);
}

std::string series_tag(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "t%03d", i);
  return buf;
}

/// Noiseless contrast curve for the configured model and initial state.
Eigen::VectorXd contrast_curve(const ExperimentConfig& cfg, const Eigen::VectorXd& times) {
  if (cfg.initial == "thermal") {
    const int n_terms =
        std::max(4, static_cast<int>(std::ceil(std::log(1e-4) /
                                               std::log(cfg.nbar / (1.0 + cfg.nbar)))));
    const PhononDistribution<> dist = thermal_distribution(cfg.nbar, n_terms);
    ThermalContrastOptions opts;
    opts.evolve = cfg.evolve;
    return contrast_thermal_scan(times, cfg.drive, dist, cfg.model, opts);
  }
  Eigen::VectorXd c(times.size());
  if (cfg.model == DynamicsModel::closed) {
    for (Eigen::Index i = 0; i < times.size(); ++i) c[i] = contrast_ground(times[i], cfg.drive);
    return c;
  }
  std::vector<int> n0{0};
  EvolveOptions eopts = cfg.evolve;
  eopts.keep_states = false;
  AlphaFamily fam = alpha_n_family(n0, cfg.drive, times, cfg.model, eopts);
  for (Eigen::Index i = 0; i < times.size(); ++i)
    c[i] = std::min(1.0, std::abs(fam.overlap(0, i)));
  return c;
}

/// Branch displacement trajectory of the ground state for the configured model.
Eigen::VectorXcd displacement_curve(const ExperimentConfig& cfg, const Eigen::VectorXd& times) {
  if (cfg.model == DynamicsModel::closed) {
    Eigen::VectorXcd a(times.size());
    for (Eigen::Index i = 0; i < times.size(); ++i) a[i] = alpha_closed(times[i], cfg.drive);
    return a;
  }
  EvolveOptions eopts = cfg.evolve;
  eopts.keep_states = false;
  MotionalState<> ground = fock_state(0, 31);
  // times[0] == 0 is allowed by evolve; strip duplicates is caller's concern
  BranchTrajectory traj = evolve_branch_at(ground, cfg.drive, times, cfg.model, eopts);
  return traj.alpha;
}

Eigen::VectorXd phonon_pdf_at(const ExperimentConfig& cfg, double t_d, int n_basis) {
  if (cfg.model == DynamicsModel::closed) {
    const std::complex<double> al = alpha_closed(t_d, cfg.drive);
    return coherent_state(al, n_basis, 1e-6).amplitudes.cwiseAbs2();
  }
  Eigen::VectorXd times(1);
  times[0] = t_d;
  EvolveOptions eopts = cfg.evolve;
  eopts.keep_states = true;
  eopts.n_max = std::max(eopts.n_max, n_basis);
  MotionalState<> ground = fock_state(0, 31);
  BranchTrajectory traj = evolve_branch_at(ground, cfg.drive, times, cfg.model, eopts);
  Eigen::VectorXd p = traj.states.back().amplitudes.cwiseAbs2();
  p.conservativeResize(n_basis + 1);
  return p;
}

SimulateResult simulate_contrast(const ExperimentConfig& cfg, const fs::path& out) {
  const std::vector<double> controls = cfg.grid.points();
  Eigen::VectorXd times(controls.size());
  for (std::size_t i = 0; i < controls.size(); ++i) times[i] = controls[i];

  const Eigen::VectorXd contrast = contrast_curve(cfg, times);
  Eigen::VectorXd p_up(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i)
    p_up[i] = 0.5 * (1.0 + contrast[i] * std::exp(-times[i] / cfg.drive.tau));

  MeasurementRecord rec = sample_grid(controls, p_up, cfg.shots, cfg.seed, ScanType::contrast);
  rec.meta = cfg.base_meta();

  SimulateResult res;
  const fs::path csv = out / (cfg.output_prefix + ".csv");
  const fs::path meta = out / (cfg.output_prefix + ".meta.json");
  write_record(csv, meta, rec);
  std::string truth = "control,p_up,contrast\n";
  for (Eigen::Index i = 0; i < times.size(); ++i)
    truth += format_double(times[i]) + "," + format_double(p_up[i]) + "," +
             format_double(contrast[i]) + "\n";
  const fs::path truth_path = out / (cfg.output_prefix + ".truth.csv");
  write_file_atomic(truth_path, truth);
  res.files = {csv, meta, truth_path};
  res.index = nlohmann::json::object();
  return res;
}

SimulateResult simulate_bsb(const ExperimentConfig& cfg, const fs::path& out) {
  if (cfg.initial != "ground")
    throw ConfigError("config: $.initial.type: bsb scans support only the ground state");
  const std::vector<double> t_disp = cfg.displacement_grid.points();
  const std::vector<double> t_probe = cfg.probe_grid.points();

  double alpha_max = 0.0;
  for (double t : t_disp) alpha_max = std::max(alpha_max, std::abs(alpha_closed(t, cfg.drive)));
  const int n_basis = default_n_max(alpha_max);

  SimulateResult res;
  nlohmann::json records = nlohmann::json::array();
  std::string truth = "t_s,re_alpha,im_alpha\n";
  Eigen::VectorXd t_all(t_disp.size());
  for (std::size_t i = 0; i < t_disp.size(); ++i) t_all[i] = t_disp[i];
  const Eigen::VectorXcd alpha_truth = displacement_curve(cfg, t_all);

  for (std::size_t i = 0; i < t_disp.size(); ++i) {
    const Eigen::VectorXd pdf = phonon_pdf_at(cfg, t_disp[i], n_basis);
    const PhononDistribution<> dist(pdf);
    Eigen::VectorXd q(t_probe.size());
    for (std::size_t j = 0; j < t_probe.size(); ++j)
      q[j] = bsb_signal(t_probe[j], dist, cfg.sequence, cfg.trap.eta);
    MeasurementRecord rec = sample_grid(t_probe, q, cfg.shots,
                                        derive_seed(cfg.seed, 0x5B5Bu, i), ScanType::bsb);
    rec.meta = cfg.base_meta();
    rec.meta.displacement_time_s = t_disp[i];
    rec.meta.seed = derive_seed(cfg.seed, 0x5B5Bu, i);
    const std::string tag = cfg.output_prefix + "." + series_tag(static_cast<int>(i));
    const fs::path csv = out / (tag + ".csv");
    const fs::path meta = out / (tag + ".meta.json");
    write_record(csv, meta, rec);
    res.files.push_back(csv);
    res.files.push_back(meta);
    records.push_back({{"control_s", t_disp[i]},
                       {"csv", csv.filename().string()},
                       {"meta", meta.filename().string()}});
    truth += format_double(t_disp[i]) + "," + format_double(alpha_truth[i].real()) + "," +
             format_double(alpha_truth[i].imag()) + "\n";
  }

  const fs::path truth_path = out / (cfg.output_prefix + ".truth.csv");
  write_file_atomic(truth_path, truth);
  res.files.push_back(truth_path);

  nlohmann::json index;
  index["version"] = 1;
  index["scan"] = "bsb";
  index["records"] = records;
  index["truth_csv"] = truth_path.filename().string();
  const fs::path index_path = out / (cfg.output_prefix + ".index.json");
  write_file_atomic(index_path, index.dump(2) + "\n");
  res.files.push_back(index_path);
  res.index = index;
  return res;
}

SimulateResult simulate_homodyne(const ExperimentConfig& cfg, const fs::path& out) {
  if (cfg.initial != "ground")
    throw ConfigError("config: $.initial.type: homodyne scans support only the ground state");
  const std::vector<double> t_disp = cfg.displacement_grid.points();
  std::vector<double> phases(cfg.phase_points);
  for (int j = 0; j < cfg.phase_points; ++j) phases[j] = kTwoPi * j / cfg.phase_points;

  Eigen::VectorXd t_all(t_disp.size());
  for (std::size_t i = 0; i < t_disp.size(); ++i) t_all[i] = t_disp[i];
  const Eigen::VectorXcd alpha = displacement_curve(cfg, t_all);

  SimulateResult res;
  nlohmann::json records = nlohmann::json::array();
  std::string truth = "t_s,re_alpha,im_alpha,alpha_mag,phi\n";

  for (std::size_t i = 0; i < t_disp.size(); ++i) {
    const double t_d = t_disp[i];
    const double amag = std::abs(alpha[i]);
    const double phi_osc = cfg.drive.delta * (t_d + cfg.sequence.t_wait);
    Eigen::VectorXd q(phases.size());
    for (std::size_t j = 0; j < phases.size(); ++j)
      q[j] = homodyne_signal(t_d, amag, phases[j] + cfg.sequence.delta_phi + phi_osc, cfg.sequence);
    MeasurementRecord rec = sample_grid(phases, q, cfg.shots,
                                        derive_seed(cfg.seed, 0x4D4Du, i), ScanType::homodyne);
    rec.meta = cfg.base_meta();
    rec.meta.displacement_time_s = t_d;
    rec.meta.seed = derive_seed(cfg.seed, 0x4D4Du, i);
    const std::string tag = cfg.output_prefix + "." + series_tag(static_cast<int>(i));
    const fs::path csv = out / (tag + ".csv");
    const fs::path meta = out / (tag + ".meta.json");
    write_record(csv, meta, rec);
    res.files.push_back(csv);
    res.files.push_back(meta);
    records.push_back({{"control_s", t_d},
                       {"csv", csv.filename().string()},
                       {"meta", meta.filename().string()}});
    truth += format_double(t_d) + "," + format_double(alpha[i].real()) + "," +
             format_double(alpha[i].imag()) + "," + format_double(amag) + "," +
             format_double(std::remainder(phi_osc, kTwoPi)) + "\n";
  }

  const fs::path truth_path = out / (cfg.output_prefix + ".truth.csv");
  write_file_atomic(truth_path, truth);
  res.files.push_back(truth_path);

  nlohmann::json index;
  index["version"] = 1;
  index["scan"] = "homodyne";
  index["records"] = records;
  index["truth_csv"] = truth_path.filename().string();
  const fs::path index_path = out / (cfg.output_prefix + ".index.json");
  write_file_atomic(index_path, index.dump(2) + "\n");
  res.files.push_back(index_path);
  res.index = index;
  return res;
}

DriveParams drive_from_meta(const RecordMeta& m) {
  DriveParams d;
  d.delta_s = kTwoPi * m.delta_s_hz;
  d.delta = kTwoPi * m.delta_hz;
  d.eta = m.eta;
  d.omega_ax = kTwoPi * m.omega_ax_hz;
  d.phase = m.phase_rad;
  d.spin_sign = m.spin_sign;
  d.tau = m.drive_tau_s;
  return d;
}

SequenceParams sequence_from_meta(const RecordMeta& m) {
  SequenceParams s;
  s.t_wait = m.t_wait_s;
  s.delta_phi = m.delta_phi_rad;
  s.tau = m.seq_tau_s;
  s.fringe_amplitude = m.fringe_amplitude;
  s.omega0 = kTwoPi * m.omega0_hz;
  return s;
}

struct SeriesEntry {
  double control = 0.0;
  MeasurementRecord record;
};

std::vector<SeriesEntry> load_series(const fs::path& index_path) {
  const nlohmann::json index = parse_json_file(index_path);
  if (!index.contains("records") || !index["records"].is_array())
    throw IoError("index " + index_path.string() + ": missing records array");
  std::vector<SeriesEntry> out;
  const fs::path dir = index_path.parent_path();
  for (const auto& r : index["records"]) {
    SeriesEntry e;
    e.control = r.at("control_s").get<double>();
    e.record = read_record(dir / r.at("csv").get<std::string>(),
                           dir / r.at("meta").get<std::string>());
    out.push_back(std::move(e));
  }
  if (out.empty()) throw IoError("index " + index_path.string() + ": no records");
  return out;
}

ReconstructHints hints_from(const FitJob& job, const RecordMeta& meta) {
  ReconstructHints h;
  if (job.omega0_hint_hz)
    h.omega0 = kTwoPi * *job.omega0_hint_hz;
  else if (meta.omega0_hz > 0.0)
    h.omega0 = kTwoPi * meta.omega0_hz;
  if (std::isfinite(meta.seq_tau_s)) h.tau = meta.seq_tau_s;
  return h;
}

void write_fit_curve(const fs::path& path, const MeasurementRecord& rec,
                     const Eigen::VectorXd& data, const Eigen::VectorXd& fitted) {
  std::string csv = "control,data,fit,residual\n";
  for (std::size_t i = 0; i < rec.size(); ++i)
    csv += format_double(rec.control[i]) + "," + format_double(data[i]) + "," +
           format_double(fitted[i]) + "," + format_double(data[i] - fitted[i]) + "\n";
  write_file_atomic(path, csv);
}

ReconstructResult reconstruct_phonons_job(const FitJob& job, const fs::path& out, int threads) {
  const fs::path csv = job.dataset.string() + ".csv";
  const fs::path metaf = job.dataset.string() + ".meta.json";
  MeasurementRecord rec = read_record(csv, metaf);
  GAConfig ga = job.ga;
  ga.threads = threads;
  auto [dist, fit] = reconstruct_phonons(rec, ga, hints_from(job, rec.meta));

  FitResult coh = fit_coherent(dist);

  ReconstructResult res;
  res.converged = fit.converged;
  nlohmann::json summary;
  summary["fit"] = to_json(fit);
  summary["coherent_fit"] = to_json(coh);
  std::vector<double> p(dist.p.data(), dist.p.data() + dist.p.size());
  summary["phonon_distribution"] = p;
  res.summary = summary;

  const fs::path fit_path = out / (job.output_prefix + ".fit.json");
  write_file_atomic(fit_path, summary.dump(2) + "\n");
  res.files.push_back(fit_path);

  // plot-ready curve
  SequenceParams seq = sequence_from_meta(rec.meta);
  seq.omega0 = fit.params.at("omega0");
  seq.tau = fit.params.at("tau");
  seq.fringe_amplitude = fit.params.at("a");
  Eigen::VectorXd data(rec.size()), fitted(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    data[i] = rec.fraction(i);
    fitted[i] = bsb_signal(rec.control[i], dist, seq, rec.meta.eta);
  }
  const fs::path curve_path = out / (job.output_prefix + ".curve.csv");
  write_fit_curve(curve_path, rec, data, fitted);
  res.files.push_back(curve_path);
  return res;
}

ReconstructResult reconstruct_bsb_series(const FitJob& job, const fs::path& out, int threads) {
  const std::vector<SeriesEntry> series = load_series(job.dataset);
  ReconstructResult res;
  nlohmann::json items = nlohmann::json::array();
  std::string csv = "t_s,alpha_mag,alpha_lo,alpha_hi,gof,converged\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    GAConfig ga = job.ga;
    ga.threads = threads;
    ga.seed = derive_seed(job.ga.seed, 0xF17u, i);
    auto [dist, fit] = reconstruct_phonons(series[i].record, ga,
                                           hints_from(job, series[i].record.meta));
    FitResult coh = fit_coherent(dist);
    const double amag = coh.params.at("alpha_mag");
    const auto ci = coh.ci.at("alpha_mag");
    csv += format_double(series[i].control) + "," + format_double(amag) + "," +
           format_double(ci.first) + "," + format_double(ci.second) + "," +
           format_double(coh.chi2.value_or(0.0)) + "," + (fit.converged ? "1" : "0") + "\n";
    nlohmann::json item;
    item["control_s"] = series[i].control;
    item["fit"] = to_json(fit);
    item["coherent_fit"] = to_json(coh);
    items.push_back(std::move(item));
    res.converged = res.converged && fit.converged;
  }
  const fs::path series_path = out / (job.output_prefix + ".alpha_series.csv");
  write_file_atomic(series_path, csv);
  const fs::path summary_path = out / (job.output_prefix + ".fits.json");
  nlohmann::json summary;
  summary["records"] = items;
  write_file_atomic(summary_path, summary.dump(2) + "\n");
  res.files = {series_path, summary_path};
  res.summary = summary;
  return res;
}

ReconstructResult reconstruct_homodyne_series(const FitJob& job, const fs::path& out, int) {
  const std::vector<SeriesEntry> series = load_series(job.dataset);
  ReconstructResult res;

  std::vector<TrajectoryPoint> points;
  std::vector<std::pair<double, double>> phase_points;
  std::vector<double> phase_sigma;
  nlohmann::json items = nlohmann::json::array();
  std::string csv = "t_s,alpha_mag,alpha_se,phi,phi_se,re_alpha,im_alpha,identifiable\n";

  const RecordMeta& meta0 = series.front().record.meta;
  for (const auto& entry : series) {
    const SequenceParams seq = sequence_from_meta(entry.record.meta);
    nlohmann::json item;
    item["control_s"] = entry.control;
    try {
      FitResult fr = fit_homodyne_fringe(entry.record, entry.control, seq);
      const double amag = fr.params.at("alpha_mag");
      const double phi = fr.params.at("phi");
      const double phi_se = 0.5 * (fr.ci.at("phi").second - fr.ci.at("phi").first);
      const double a_se = 0.5 * (fr.ci.at("alpha_mag").second - fr.ci.at("alpha_mag").first);
      points.push_back({entry.control, amag, phi});
      phase_points.push_back({entry.control, phi});
      phase_sigma.push_back(std::max(phi_se, 1e-4));
      csv += format_double(entry.control) + "," + format_double(amag) + "," +
             format_double(a_se) + "," + format_double(phi) + "," + format_double(phi_se) + "," +
             format_double(amag * std::cos(phi)) + "," + format_double(amag * std::sin(phi)) +
             ",1\n";
      item["fit"] = to_json(fr);
    } catch (const UnidentifiableError& e) {
      csv += format_double(entry.control) + ",0,0,0,0,0,0,0\n";
      item["skipped"] = e.what();
    }
    items.push_back(std::move(item));
  }
  if (phase_points.size() < 5)
    throw NonConvergenceError("homodyne series: too few identifiable fringes");

  const SequenceParams seq0 = sequence_from_meta(meta0);
  FitResult detuning = fit_detuning(phase_points, seq0, &phase_sigma);

  DriveParams guess = drive_from_meta(meta0);
  guess.delta = detuning.params.at("delta");
  FitResult trajectory = fit_trajectory(points, guess);

  nlohmann::json summary;
  summary["records"] = items;
  summary["detuning_fit"] = to_json(detuning);
  summary["trajectory_fit"] = to_json(trajectory);
  res.summary = summary;
  res.converged = detuning.converged && trajectory.converged;

  const fs::path traj_path = out / (job.output_prefix + ".trajectory.csv");
  write_file_atomic(traj_path, csv);
  const fs::path det_path = out / (job.output_prefix + ".detuning.json");
  write_file_atomic(det_path, to_json(detuning).dump(2) + "\n");
  const fs::path fit_path = out / (job.output_prefix + ".trajectory_fit.json");
  write_file_atomic(fit_path, to_json(trajectory).dump(2) + "\n");
  res.files = {traj_path, det_path, fit_path};
  return res;
}

ReconstructResult reconstruct_contrast(const FitJob& job, const fs::path& out, int) {
  const fs::path csv = job.dataset.string() + ".csv";
  const fs::path metaf = job.dataset.string() + ".meta.json";
  MeasurementRecord rec = read_record(csv, metaf);

  ContrastFitSpec spec;
  spec.model = job.contrast_model;
  spec.free = job.free_params;
  spec.drive0 = drive_from_meta(rec.meta);
  spec.nbar0 = rec.meta.nbar;
  if (rec.meta.model != "closed") spec.kernel_model = dynamics_model_from_string(rec.meta.model);
  FitResult fit = fit_contrast_curve(rec, spec);

  ReconstructResult res;
  res.converged = fit.converged;
  res.summary = to_json(fit);
  const fs::path fit_path = out / (job.output_prefix + ".fit.json");
  write_file_atomic(fit_path, res.summary.dump(2) + "\n");
  res.files.push_back(fit_path);

  // residuals are sigma-weighted; undo the weights to plot the fitted curve
  Eigen::VectorXd data(rec.size()), fitted(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    data[i] = 2.0 * rec.fraction(i) - 1.0;
    const double qs = (rec.successes[i] + 1.0) / (rec.shots[i] + 2.0);
    const double sig = 2.0 * std::sqrt(qs * (1.0 - qs) / rec.shots[i]);
    fitted[i] = data[i] - fit.residuals[i] * sig;
  }
  const fs::path curve_path = out / (job.output_prefix + ".curve.csv");
  write_fit_curve(curve_path, rec, data, fitted);
  res.files.push_back(curve_path);
  return res;
}

}  // namespace

SimulateResult run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  (void)threads;
  std::filesystem::create_directories(out_dir);
  switch (cfg.scan) {
    case ScanType::contrast: return simulate_contrast(cfg, out_dir);
    case ScanType::bsb: return simulate_bsb(cfg, out_dir);
    case ScanType::homodyne: return simulate_homodyne(cfg, out_dir);
  }
  throw ConfigError("config: unknown scan type");
}

ReconstructResult run_reconstruct(const FitJob& job, const fs::path& out_dir, int threads) {
  std::filesystem::create_directories(out_dir);
  if (job.kind == "phonons") return reconstruct_phonons_job(job, out_dir, threads);
  if (job.kind == "bsb_series") return reconstruct_bsb_series(job, out_dir, threads);
  if (job.kind == "homodyne_series") return reconstruct_homodyne_series(job, out_dir, threads);
  if (job.kind == "contrast") return reconstruct_contrast(job, out_dir, threads);
  throw ConfigError("config: unknown fit kind " + job.kind);
}

int run_selftest(std::ostream& out, double dt_override) {
  int failures = 0;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS  " : "FAIL  ") << name << "  (" << detail << ")\n";
    if (!pass) ++failures;
  };

  {  // analytic displaced-Fock elements vs brute-force matrix exponential
    double worst = 0.0;
    for (int ib = 0; ib < 12; ++ib) {
      const double r = 0.25 + 2.75 * ib / 11.0;
      const double th = kTwoPi * ib / 12.0;
      const std::complex<double> beta = std::polar(r, th);
      const Eigen::MatrixXcd d = displacement_oracle(beta, 64, false);
      const Eigen::MatrixXcd ds = displacement_matrix(beta, 64);
      for (int n = 0; n <= 12; ++n)
        worst = std::max(worst, std::abs(d(n, n) - displaced_fock_overlap(n, beta)));
      worst = std::max(worst, (d.topLeftCorner(13, 13) - ds.topLeftCorner(13, 13))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    std::ostringstream ss;
    ss << "max deviation " << std::scientific << std::setprecision(2) << worst;
    report("oracle-equivalence", worst <= 1e-9, ss.str());
  }

  DriveParams drive;
  drive.delta_s = kTwoPi * 4.0e5;
  drive.delta = kTwoPi * 3.0e4;
  drive.eta = 0.25;
  drive.omega_ax = kTwoPi * 1.35e6;

  {  // unitarity of both numeric propagators
    double worst = 0.0;
    for (DynamicsModel model : {DynamicsModel::rwa_n_dependent, DynamicsModel::full_wave}) {
      EvolveOptions opts;
      opts.check_steps = false;
      BranchTrajectory traj =
          evolve_branch(fock_state(0, 31), drive, 2.0e-5, model, opts);
      for (const auto& s : traj.states) worst = std::max(worst, std::abs(s.norm_sq() - 1.0));
    }
    std::ostringstream ss;
    ss << "max |norm-1| " << std::scientific << std::setprecision(2) << worst;
    report("unitarity", worst <= 1e-8, ss.str());
  }

  {  // Lamb-Dicke limit: numeric models reproduce the closed form. eta is
     // swept down to the degenerate-coupling edge (eta = 0 itself is outside
     // the 0 < eta < 1 domain), where closed and numeric agree trivially.
    double worst_rel = 0.0;
    for (double eta : {0.05, 1e-3}) {
      DriveParams ld = drive;
      ld.eta = eta;
      ld.delta_s = kTwoPi * 2.0e5;  // weak against omega_ax so the walking-wave
      ld.delta = kTwoPi * 1.0e4;    // corrections stay below the 1% budget
      const double period = kTwoPi / ld.delta;
      Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(33, 0.0, period);
      EvolveOptions opts;
      opts.check_steps = false;
      opts.keep_states = false;
      double amax = 0.0, worst = 0.0;
      for (Eigen::Index i = 0; i < times.size(); ++i)
        amax = std::max(amax, std::abs(alpha_closed(times[i], ld)));
      for (DynamicsModel model : {DynamicsModel::rwa_n_dependent, DynamicsModel::full_wave}) {
        BranchTrajectory traj = evolve_branch_at(fock_state(0, 31), ld, times, model, opts);
        for (Eigen::Index i = 0; i < times.size(); ++i)
          worst = std::max(worst, std::abs(traj.alpha[i] - alpha_closed(times[i], ld)));
      }
      worst_rel = std::max(worst_rel, worst / amax);
    }
    std::ostringstream ss;
    ss << "max |dev|/max|alpha| " << std::scientific << std::setprecision(2) << worst_rel;
    report("lamb-dicke-limit", worst_rel <= 0.01, ss.str());
  }

  {  // step convergence at the configured (or overridden) step
    EvolveOptions opts;
    opts.check_steps = true;
    if (dt_override > 0.0) opts.dt = dt_override;
    bool pass = true;
    std::string detail = "dt halving within 1e-6";
    try {
      evolve_branch(fock_state(0, 31), drive, 1.0e-5, DynamicsModel::full_wave, opts);
    } catch (const StepSizeError& e) {
      pass = false;
      detail = e.what();
    } catch (const std::invalid_argument& e) {
      pass = false;
      detail = e.what();
    }
    report("step-convergence", pass, detail);
  }

  return failures;
}

}  // namespace ionphase
