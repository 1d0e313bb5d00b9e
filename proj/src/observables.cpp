#include "ionphase/observables.hpp"

#include <algorithm>
#include <cmath>

#include "ionphase/rng.hpp"

namespace ionphase {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

/// Exponent-safe decay factor; tau may be +infinity.
double decay(double t, double tau) { return std::exp(-(t / tau)); }

}  // namespace

double contrast_ground(double t, const DriveParams& drive) {
  const double u = std::norm(alpha_closed(t, drive));
  return std::exp(-2.0 * u);
}

Eigen::VectorXd contrast_thermal_scan(const Eigen::VectorXd& times, const DriveParams& drive,
                                      const PhononDistribution<>& dist, DynamicsModel model,
                                      const ThermalContrastOptions& opts) {
  if (dist.truncation_deficit() >= 1e-4)
    throw std::invalid_argument("contrast_thermal: distribution truncation deficit must be < 1e-4");
  const double weight_sum = dist.p.sum();

  Eigen::VectorXd out(times.size());
  if (model == DynamicsModel::closed) {
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      const double u = std::norm(alpha_closed(times[k], drive));
      const Eigen::VectorXd lag = laguerre_all(dist.n_max(), 0, 4.0 * u);
      double c = 0.0;
      for (int n = 0; n <= dist.n_max(); ++n)
        c += dist.p[n] * std::exp(-2.0 * u) * std::abs(lag[n]);
      out[k] = clamp01(c / weight_sum);
    }
    return out;
  }

  std::vector<int> n_list(dist.n_max() + 1);
  for (int n = 0; n <= dist.n_max(); ++n) n_list[n] = n;
  EvolveOptions eopts = opts.evolve;
  eopts.keep_states = false;
  AlphaFamily fam = alpha_n_family(n_list, drive, times, model, eopts);
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    double c = 0.0;
    for (int n = 0; n <= dist.n_max(); ++n) c += dist.p[n] * std::abs(fam.overlap(n, k));
    out[k] = clamp01(c / weight_sum);
  }
  return out;
}

double contrast_thermal(double t, const DriveParams& drive, const PhononDistribution<>& dist,
                        DynamicsModel model, const ThermalContrastOptions& opts) {
  Eigen::VectorXd times(1);
  times[0] = t;
  return contrast_thermal_scan(times, drive, dist, model, opts)[0];
}

double bsb_signal(double t_p, const PhononDistribution<>& dist, const SequenceParams& seq,
                  double eta, RabiModel rabi_model) {
  seq.validate();
  if (t_p < 0.0) throw std::invalid_argument("bsb_signal: t_p must be >= 0");
  const double damp = seq.fringe_amplitude * decay(t_p, seq.tau);
  double p_down = 0.0;
  for (int n = 0; n <= dist.n_max(); ++n) {
    const double omega_n = rabi_model == RabiModel::ld
                               ? eta * std::sqrt(double(n) + 1.0) * seq.omega0
                               : sideband_element(n, eta) * seq.omega0;
    p_down += dist.p[n] / 2.0 * (damp * std::cos(omega_n * t_p) + 1.0);
  }
  return clamp01(p_down);
}

double homodyne_signal(double t, double alpha_mag, double phi, const SequenceParams& seq) {
  seq.validate();
  if (alpha_mag < 0.0) throw std::invalid_argument("homodyne_signal: alpha_mag must be >= 0");
  const double a2 = alpha_mag * alpha_mag;
  const double ph = std::remainder(phi, kTwoPi);
  const double envelope = std::exp(-a2 * (1.0 - std::cos(ph)) - t / seq.tau);
  return clamp01(0.5 * (1.0 - envelope * std::cos(a2 * std::sin(ph))));
}

MeasurementRecord sample_record(const std::function<double(double)>& curve,
                                const std::vector<double>& controls, long long shots,
                                std::uint64_t seed, ScanType scan_type) {
  if (shots < 1) throw std::invalid_argument("sample_record: shots must be >= 1");
  MeasurementRecord rec;
  rec.scan_type = scan_type;
  rec.control = controls;
  rec.shots.assign(controls.size(), shots);
  rec.successes.resize(controls.size());
  CounterRng rng{seed};
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const double p = curve(controls[i]);
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("sample_record: curve value outside [0,1]");
    long long hits = 0;
    for (long long j = 0; j < shots; ++j)
      if (rng.uniform(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) < p) ++hits;
    rec.successes[i] = hits;
  }
  return rec;
}

}  // namespace ionphase
