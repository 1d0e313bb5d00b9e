#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ionphase/dynamics.hpp"
#include "ionphase/fock.hpp"
#include "ionphase/observables.hpp"
#include "ionphase/record.hpp"

namespace ionphase {

/// Genetic-algorithm configuration for the phonon reconstruction.
struct GAConfig {
  int population = 96;
  int generations = 400;
  double mutation_scale = 0.05;  // Gaussian sigma on the unconstrained genes
  double crossover_rate = 0.7;
  int elite_count = 4;
  std::uint64_t seed = 1;
  int n_max = 8;                  // reconstructed basis size
  int bootstrap_resamples = 200;  // 0 disables confidence intervals
  int threads = 1;

  void validate() const {
    if (population < 10) throw std::invalid_argument("GAConfig: population must be >= 10");
    if (elite_count < 0 || elite_count >= population)
      throw std::invalid_argument("GAConfig: elite_count must be < population");
    if (generations < 1) throw std::invalid_argument("GAConfig: generations must be >= 1");
    if (n_max < 1) throw std::invalid_argument("GAConfig: n_max must be >= 1");
  }
};

/// Default reconstruction basis: 2 + ceil(3 max|alpha|^2), at least 8.
inline int reconstruct_n_max(double alpha_abs_max) {
  return std::max(8, 2 + static_cast<int>(std::ceil(3.0 * alpha_abs_max * alpha_abs_max)));
}

/// Parameter estimates with 68% confidence intervals and diagnostics.
struct FitResult {
  std::map<std::string, double> params;
  std::map<std::string, std::pair<double, double>> ci;  // 68% (lo, hi)
  std::optional<double> log_likelihood;
  std::optional<double> chi2;
  bool converged = false;
  Eigen::VectorXd residuals;
  std::vector<std::string> diagnostics;
  std::vector<double> history;  // per-generation best log-likelihood (GA fits)

  void check_invariants() const;
};

nlohmann::json to_json(const FitResult& fit);

/// Optional starting hints for the reconstruction (e.g. the calibrated
/// carrier Rabi frequency). Without a hint the carrier is located from a
/// periodogram of the record.
struct ReconstructHints {
  std::optional<double> omega0;  // rad/s
  std::optional<double> tau;     // s
};

/// Maximum-likelihood phonon reconstruction from a blue-sideband record by a
/// genetic algorithm over (p_0..p_nmax, Omega_0, a, tau), followed by a
/// Nelder-Mead polish. p lives on the simplex exactly (softmax encoding).
/// Confidence intervals by parametric bootstrap.
std::pair<PhononDistribution<>, FitResult> reconstruct_phonons(
    const MeasurementRecord& record, const GAConfig& cfg, const ReconstructHints& hints = {});

/// Least-squares fit of a coherent-state (Poisson) phonon distribution;
/// reports |alpha| and a goodness-of-fit so non-coherent states are flagged.
FitResult fit_coherent(const PhononDistribution<>& dist);

/// Fit of the homodyne beat fringe at fixed displacement time t over the
/// scanned beat phase, returning alpha_mag, phi (envelope center) and tau.
FitResult fit_homodyne_fringe(const MeasurementRecord& record, double t,
                              const SequenceParams& seq);

struct TrajectoryFitOptions {
  bool free_amplitude = true;  // otherwise tied to eta Delta_S / (2 delta_eff)
  bool fit_phases = true;      // complex fit with the measured phases
};

/// One phase-space sample from the homodyne pipeline.
struct TrajectoryPoint {
  double t = 0.0;
  double alpha_mag = 0.0;
  double phi = 0.0;
};

/// Fit of the closed-form trajectory with an effective detuning in the sine
/// argument; returns amplitude = eta Delta_S / (2 delta_eff) and delta_eff.
FitResult fit_trajectory(const std::vector<TrajectoryPoint>& points,
                         const DriveParams& drive_guess,
                         const TrajectoryFitOptions& opts = {});

/// Linear regression of the unwrapped fringe phase against time; the slope is
/// the detuning delta. Unwrapping is nearest-branch continuation from t = 0;
/// the number of 2 pi corrections is reported. Optional per-point sigmas turn
/// it into a weighted regression.
FitResult fit_detuning(const std::vector<std::pair<double, double>>& points,
                       const SequenceParams& seq, const std::vector<double>* sigma = nullptr);

enum class ContrastModel { ground, thermal_n_independent, thermal_n_dependent };

ContrastModel contrast_model_from_string(const std::string& s);
std::string to_string(ContrastModel m);

struct ContrastFitSpec {
  ContrastModel model = ContrastModel::ground;
  std::set<std::string> free;  // subset of {"delta_s", "delta", "tau", "nbar"}
  DriveParams drive0;          // starting values / fixed parameters
  double nbar0 = 0.0;
  DynamicsModel kernel_model = DynamicsModel::rwa_n_dependent;  // n-dependent path
  EvolveOptions evolve;
};

/// Least-squares fit of the contrast curve (contrast model times the e^{-t/tau}
/// readout decay) against a contrast record. The thermal n-dependent fit keeps
/// the drive fixed and frees only {nbar, tau}, mirroring the ground-state-first
/// procedure.
FitResult fit_contrast_curve(const MeasurementRecord& record, const ContrastFitSpec& spec);

}  // namespace ionphase
