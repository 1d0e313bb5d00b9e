#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ionphase/fock.hpp"

namespace ionphase {

/// Spin-dependent displacement drive. All frequencies in rad/s.
struct DriveParams {
  double delta_s = 0.0;   // differential ac-Stark shift Delta_S
  double delta = 0.0;     // detuning of the drive beat from omega_ax
  double eta = 0.25;      // Lamb-Dicke factor
  double omega_ax = 0.0;  // axial trap frequency
  double phase = 0.0;     // drive beat phase phi_L
  int spin_sign = +1;     // sign of the force on |up> vs |down>
  double tau = std::numeric_limits<double>::infinity();  // decoherence time (s)

  DriveParams flipped() const {
    DriveParams d = *this;
    d.spin_sign = -d.spin_sign;
    return d;
  }

  void validate() const {
    if (spin_sign != 1 && spin_sign != -1)
      throw std::invalid_argument("DriveParams: spin_sign must be +1 or -1");
    if (!(tau > 0.0)) throw std::invalid_argument("DriveParams: tau must be > 0");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("DriveParams: eta in (0,1)");
  }
};

enum class DynamicsModel { closed, rwa_n_dependent, full_wave };

std::string to_string(DynamicsModel m);
DynamicsModel dynamics_model_from_string(const std::string& s);

/// Phase-space displacement per time for one branch, plus the full state
/// vectors when a numeric model ran with keep_states.
struct BranchTrajectory {
  DynamicsModel model = DynamicsModel::closed;
  Eigen::VectorXd times;
  Eigen::VectorXcd alpha;
  std::vector<MotionalState<>> states;  // empty unless requested
};

struct EvolveOptions {
  double dt = 0.0;        // integrator step; 0 = automatic
  int n_max = 0;          // working basis size; 0 = automatic
  bool keep_states = true;
  bool check_steps = true;       // repeat at dt/2 and compare final states
  double step_tol = 1e-6;        // threshold for the dt-halving check
  double truncation_tol = 1e-6;  // max allowed top-of-basis population
  int max_outputs = 2048;        // cap on stored samples for evolve_branch
};

/// Closed-form Lamb-Dicke displacement,
///   alpha(t) = -(eta Delta_S / 2 delta) e^{i delta t/2} sin(delta t/2),
/// multiplied by spin_sign and rotated by the drive phase. The delta -> 0
/// limit -eta Delta_S t / 4 is returned on resonance.
std::complex<double> alpha_closed(double t, const DriveParams& drive);

/// <a> of a state, so that extract_alpha(coherent_state(alpha)) == alpha.
std::complex<double> extract_alpha(const MotionalState<>& state);

/// Evolve one motional branch under the drive, sampling at the given output
/// times (ascending, >= 0). Models:
///   closed           displaced initial state with alpha from alpha_closed
///   rwa_n_dependent  nearest-neighbour sideband coupling with the exact
///                    matrix elements <n+1|sin(eta(a+a^dag))|n>
///   full_wave        cos-potential walking wave in the oscillator
///                    interaction picture (reference model)
/// Numeric models use a uniform-step propagator with the exact exponential of
/// the midpoint Hamiltonian; the norm is preserved to 1e-8.
BranchTrajectory evolve_branch_at(const MotionalState<>& initial, const DriveParams& drive,
                                  const Eigen::VectorXd& times, DynamicsModel model,
                                  const EvolveOptions& opts = {});

/// Same, with an automatically chosen output grid over [0, t_final].
BranchTrajectory evolve_branch(const MotionalState<>& initial, const DriveParams& drive,
                               double t_final, DynamicsModel model,
                               const EvolveOptions& opts = {});

/// Both spin branches for a family of initial Fock states |n>.
/// alpha(i, k) is <a> of the + branch for n_list[i] at times[k];
/// overlap(i, k) = <psi_n^-(t_k)|psi_n^+(t_k)>, the contrast kernel.
struct AlphaFamily {
  std::vector<int> n_values;
  Eigen::VectorXd times;
  Eigen::MatrixXcd alpha;
  Eigen::MatrixXcd overlap;
  // populated only when keep_states: per n, states of the +/- branches
  std::map<int, std::pair<std::vector<MotionalState<>>, std::vector<MotionalState<>>>> states;
};

AlphaFamily alpha_n_family(const std::vector<int>& n_list, const DriveParams& drive,
                           const Eigen::VectorXd& times, DynamicsModel model,
                           const EvolveOptions& opts = {});

/// Closed form of the first sideband element <n+1|sin(eta(a+a^dag))|n>
///   = eta e^{-eta^2/2} L_n^1(eta^2) / sqrt(n+1).
double sideband_element(int n, double eta);

}  // namespace ionphase
