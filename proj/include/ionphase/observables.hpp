#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ionphase/dynamics.hpp"
#include "ionphase/fock.hpp"
#include "ionphase/record.hpp"

namespace ionphase {

/// Pulse-sequence parameters shared by the probe signals.
struct SequenceParams {
  double t_wait = 0.0;       // idle time t_w between the displacement pulses (s)
  double delta_phi = 0.0;    // drive phase difference of the two pulses (rad)
  double tau = std::numeric_limits<double>::infinity();  // decay time (s)
  double fringe_amplitude = 1.0;  // a, contrast of the sideband fringe
  double omega0 = 0.0;            // carrier Rabi frequency (rad/s)

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("SequenceParams: tau must be > 0");
    if (!(fringe_amplitude >= 0.0 && fringe_amplitude <= 1.0))
      throw std::invalid_argument("SequenceParams: fringe_amplitude in [0,1]");
  }
};

enum class RabiModel { ld, exact };

/// Ground-state spin-echo fringe contrast C(t) = exp(-2 |alpha(t)|^2) with the
/// closed-form displacement.
double contrast_ground(double t, const DriveParams& drive);

struct ThermalContrastOptions {
  EvolveOptions evolve;  // forwarded to the branch evolution for numeric models
};

/// Thermally averaged contrast over an initial phonon distribution.
/// model == closed uses the n-independent displacement with the analytic
/// displaced-Fock kernel exp(-2|a|^2)|L_n(4|a|^2)|; the numeric models use the
/// branch overlap |<psi_n^-|psi_n^+>| directly, which needs no kernel
/// convention and is the reference. The sum is conditioned on the truncated
/// distribution (divided by sum p_n) so C(0) = 1 exactly.
double contrast_thermal(double t, const DriveParams& drive, const PhononDistribution<>& dist,
                        DynamicsModel model, const ThermalContrastOptions& opts = {});

Eigen::VectorXd contrast_thermal_scan(const Eigen::VectorXd& times, const DriveParams& drive,
                                      const PhononDistribution<>& dist, DynamicsModel model,
                                      const ThermalContrastOptions& opts = {});

/// Blue-sideband Rabi signal
///   P_down(t_p) = sum_n (p_n/2) (a e^{-t_p/tau} cos(Omega_{n,n+1} t_p) + 1)
/// with Omega_{n,n+1} = eta sqrt(n+1) Omega_0 (RabiModel::ld) or the exact
/// Laguerre-corrected sideband element (RabiModel::exact).
double bsb_signal(double t_p, const PhononDistribution<>& dist, const SequenceParams& seq,
                  double eta, RabiModel rabi_model = RabiModel::ld);

/// Homodyne wave-packet beat signal
///   P_up = 1/2 (1 - exp(-|alpha|^2 (1 - cos phi) - t/tau) cos(|alpha|^2 sin phi)).
double homodyne_signal(double t, double alpha_mag, double phi, const SequenceParams& seq);

/// Oscillator phase accumulated between the two displacement pulses.
inline double homodyne_phase(double delta_phi, double delta, double t, double t_wait) {
  return delta_phi + delta * t + delta * t_wait;
}

/// Draw a finite-shot measurement record from a probability curve. Each
/// success count is a sum of per-shot Bernoulli draws from the SplitMix64
/// counter generator keyed by (seed, point index, shot index), so records are
/// bit-reproducible for a fixed seed on any platform.
MeasurementRecord sample_record(const std::function<double(double)>& curve,
                                const std::vector<double>& controls, long long shots,
                                std::uint64_t seed, ScanType scan_type);

}  // namespace ionphase
