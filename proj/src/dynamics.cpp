#include "ionphase/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

#include "ionphase/errors.hpp"
#include "ionphase/operators.hpp"

namespace ionphase {

namespace {

using Cplx = std::complex<double>;
constexpr Cplx kI{0.0, 1.0};
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Uniform-step propagator: applies exp(-i H(t_mid) h) to a panel of states.
// Integration may run in a convenient frame; to_lab maps the panel back to
// the reported (interaction-picture) frame at output times.
struct Propagator {
  virtual ~Propagator() = default;
  virtual void step(double t_mid, double h, Eigen::MatrixXcd& psi) = 0;
  virtual void to_lab(double /*t*/, const Eigen::MatrixXcd& psi, Eigen::MatrixXcd& out) {
    out = psi;
  }
};

// Nearest-neighbour sideband model. With R(t) = exp(i delta t n) the drive is
// H(t) = R(t) H0 R(t)^dag exactly, so in the rotating frame the generator
// H0 + delta n is time independent and every step exponential is exact; the
// step size only sets how often truncation is monitored.
struct RwaPropagator final : Propagator {
  double delta = 0.0;
  Eigen::VectorXd nvec;
  Eigen::MatrixXcd evec;
  Eigen::VectorXd eval;
  double cached_h = -1.0;
  Eigen::MatrixXcd e_cached;
  Eigen::MatrixXcd scratch;

  RwaPropagator(const DriveParams& d, int dim) {
    delta = d.delta;
    nvec = number_diagonal<double>(dim - 1);
    // exact sideband elements <n+1|sin(eta(a+a^dag))|n> from the operator
    Eigen::MatrixXcd s = hermitian_function(
        Eigen::MatrixXcd(d.eta * position_quadrature<double>(dim - 1)),
        [](double lam) { return Cplx(std::sin(lam), 0.0); });
    const double c4 = d.spin_sign * d.delta_s / 4.0;
    const Cplx up = c4 * (-kI) * std::exp(kI * d.phase);
    Eigen::MatrixXcd h_rot = Eigen::MatrixXcd::Zero(dim, dim);
    for (int n = 0; n + 1 < dim; ++n) {
      const double sn = s(n + 1, n).real();
      h_rot(n + 1, n) = up * sn;
      h_rot(n, n + 1) = std::conj(up * sn);
    }
    h_rot += (delta * nvec).asDiagonal().toDenseMatrix().cast<Cplx>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h_rot);
    if (es.info() != Eigen::Success) throw Error("rwa propagator: eigensolver failed");
    evec = es.eigenvectors();
    eval = es.eigenvalues();
  }

  void step(double /*t_mid*/, double h, Eigen::MatrixXcd& psi) override {
    if (h != cached_h) {
      Eigen::VectorXcd d(eval.size());
      for (Eigen::Index i = 0; i < eval.size(); ++i) d[i] = std::exp(-kI * eval[i] * h);
      e_cached = evec * d.asDiagonal() * evec.adjoint();
      cached_h = h;
    }
    scratch.noalias() = e_cached * psi;
    psi.swap(scratch);
  }

  void to_lab(double t, const Eigen::MatrixXcd& psi, Eigen::MatrixXcd& out) override {
    Eigen::VectorXcd rot(nvec.size());
    for (Eigen::Index n = 0; n < nvec.size(); ++n) rot[n] = std::exp(kI * (delta * t * nvec[n]));
    out = rot.asDiagonal() * psi;
  }
};

// Walking-wave optical potential in the oscillator interaction picture:
//   H(t) = -s (Delta_S/2) cos(eta(a e^{-i w t} + a^dag e^{i w t}) - theta(t)),
//   theta(t) = (omega_ax - delta) t - phase.
// The Hermitian cosine argument equals R_w(t) (eta(a+a^dag) - theta) R_w^dag,
// so its eigenbasis is time independent in the co-rotating frame and each
// midpoint exponential costs two dense products.
struct FullWavePropagator final : Propagator {
  double omega = 0.0, delta = 0.0, phase = 0.0, c2 = 0.0;
  Eigen::VectorXd nvec;
  Eigen::VectorXd eta_lam;
  Eigen::MatrixXcd evec;
  Eigen::MatrixXcd w1, w2;

  FullWavePropagator(const DriveParams& d, int dim) {
    omega = d.omega_ax;
    delta = d.delta;
    phase = d.phase;
    c2 = d.spin_sign * d.delta_s / 2.0;
    nvec = number_diagonal<double>(dim - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        Eigen::MatrixXcd(position_quadrature<double>(dim - 1)));
    if (es.info() != Eigen::Success) throw Error("full_wave propagator: eigensolver failed");
    evec = es.eigenvectors();
    eta_lam = d.eta * es.eigenvalues();
  }

  void step(double t_mid, double h, Eigen::MatrixXcd& psi) override {
    const double theta = (omega - delta) * t_mid - phase;
    Eigen::VectorXcd rot(nvec.size());
    for (Eigen::Index n = 0; n < nvec.size(); ++n) rot[n] = std::exp(kI * (omega * t_mid * nvec[n]));
    w1 = rot.conjugate().asDiagonal() * psi;
    w2.noalias() = evec.adjoint() * w1;
    for (Eigen::Index j = 0; j < eta_lam.size(); ++j)
      w2.row(j) *= std::exp(kI * (c2 * h * std::cos(eta_lam[j] - theta)));
    w1.noalias() = evec * w2;
    psi = rot.asDiagonal() * w1;
  }
};

double auto_step(const DriveParams& d, DynamicsModel model, double t_total) {
  const double f_slow =
      std::max({std::abs(d.delta), std::abs(d.delta_s) / 4.0, 1.0 / std::max(t_total, 1e-12)});
  if (model == DynamicsModel::full_wave)
    return std::min(kTwoPi / d.omega_ax / 256.0, kTwoPi / f_slow / 256.0);
  // the rwa step exponential is exact; the step only paces truncation checks
  return 4.0 * kTwoPi / f_slow;
}

int top_occupied(const MotionalState<>& s) {
  int top = 0;
  for (int n = 0; n <= s.n_max(); ++n)
    if (std::norm(s.amplitudes[n]) > 1e-14) top = n;
  return top;
}

// Closed-form excursion bound used to size the working basis.
double excursion_bound(const DriveParams& d, double t_max) {
  const double linear = d.eta * std::abs(d.delta_s) * t_max / 4.0;
  if (d.delta == 0.0) return linear;
  return std::min(std::abs(d.eta * d.delta_s / (2.0 * d.delta)), linear);
}

int auto_basis(int n_top, const DriveParams& d, double t_max) {
  const double amax = excursion_bound(d, t_max);
  const double headroom = std::max(
      32.0, std::ceil(8.0 * (1.0 + amax * amax)) + std::ceil(3.0 * amax * std::sqrt(std::max(1, n_top))));
  return n_top + static_cast<int>(headroom);
}

// Copy the occupied prefix of the initial state into a column of the working
// panel; the working basis is always sized past the top occupied level.
void embed_initial(const MotionalState<>& initial, int n_top, Eigen::MatrixXcd& psi, int col) {
  const int dim = static_cast<int>(psi.rows());
  if (n_top >= dim)
    throw std::invalid_argument("evolve: working basis smaller than the occupied initial state");
  const int copy = std::min<int>(dim, static_cast<int>(initial.amplitudes.size()));
  psi.col(col).head(copy) = initial.amplitudes.head(copy);
}

void check_times(const Eigen::VectorXd& times) {
  if (times.size() < 1) throw std::invalid_argument("evolve: need at least one output time");
  if (times[0] < 0.0) throw std::invalid_argument("evolve: times must be >= 0");
  for (Eigen::Index k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw std::invalid_argument("evolve: times must be strictly increasing");
}

// Drive the propagator through all output times; sink(k, lab_panel) runs at
// each output with the panel mapped back to the reporting frame.
void run_steps(Propagator& prop, Eigen::MatrixXcd& psi, const Eigen::VectorXd& times, double dt,
               double trunc_tol, const std::function<void(int, const Eigen::MatrixXcd&)>& sink) {
  double t = 0.0;
  const int dim = static_cast<int>(psi.rows());
  Eigen::MatrixXcd lab;
  for (int k = 0; k < times.size(); ++k) {
    const double gap = times[k] - t;
    if (gap > 1e-18) {
      const int m = std::max(1, static_cast<int>(std::ceil(gap / dt - 1e-9)));
      const double h = gap / m;
      for (int s = 0; s < m; ++s) {
        prop.step(t + (s + 0.5) * h, h, psi);
        const double top = psi.row(dim - 1).cwiseAbs2().maxCoeff();
        if (top > trunc_tol)
          throw TruncationError("evolve: top-of-basis population " + std::to_string(top) +
                                " exceeds " + std::to_string(trunc_tol) +
                                "; enlarge the working basis");
      }
      t = times[k];
    }
    if (sink) {
      prop.to_lab(t, psi, lab);
      sink(k, lab);
    }
  }
}

std::unique_ptr<Propagator> make_propagator(const DriveParams& d, DynamicsModel model, int dim) {
  if (model == DynamicsModel::rwa_n_dependent) return std::make_unique<RwaPropagator>(d, dim);
  return std::make_unique<FullWavePropagator>(d, dim);
}

Cplx panel_alpha(const Eigen::MatrixXcd& psi, int col) {
  Cplx s = 0.0;
  for (Eigen::Index n = 0; n + 1 < psi.rows(); ++n)
    s += std::sqrt(double(n) + 1.0) * std::conj(psi(n, col)) * psi(n + 1, col);
  return s;
}

double resolve_dt(const DriveParams& drive, DynamicsModel model, double t_total,
                  const EvolveOptions& opts) {
  double dt = opts.dt > 0.0 ? opts.dt : auto_step(drive, model, t_total);
  if (model == DynamicsModel::full_wave && dt > kTwoPi / drive.omega_ax / 64.0)
    throw std::invalid_argument("evolve: full_wave requires dt <= (2 pi / omega_ax) / 64");
  return dt;
}

}  // namespace

std::string to_string(DynamicsModel m) {
  switch (m) {
    case DynamicsModel::closed: return "closed";
    case DynamicsModel::rwa_n_dependent: return "rwa_n_dependent";
    case DynamicsModel::full_wave: return "full_wave";
  }
  return "?";
}

DynamicsModel dynamics_model_from_string(const std::string& s) {
  if (s == "closed") return DynamicsModel::closed;
  if (s == "rwa_n_dependent") return DynamicsModel::rwa_n_dependent;
  if (s == "full_wave") return DynamicsModel::full_wave;
  throw std::invalid_argument("unknown dynamics model: " + s);
}

std::complex<double> alpha_closed(double t, const DriveParams& drive) {
  const Cplx rot = std::exp(kI * drive.phase) * double(drive.spin_sign);
  if (drive.delta == 0.0) return rot * Cplx(-drive.eta * drive.delta_s * t / 4.0, 0.0);
  const Cplx env = std::exp(kI * (drive.delta * t / 2.0)) * std::sin(drive.delta * t / 2.0);
  return rot * (-(drive.eta * drive.delta_s / (2.0 * drive.delta)) * env);
}

std::complex<double> extract_alpha(const MotionalState<>& state) {
  Cplx s = 0.0;
  for (int n = 0; n + 1 <= state.n_max(); ++n)
    s += std::sqrt(double(n) + 1.0) * std::conj(state.amplitudes[n]) * state.amplitudes[n + 1];
  return s;
}

double sideband_element(int n, double eta) {
  return eta * std::exp(-eta * eta / 2.0) * laguerre(n, 1, eta * eta) / std::sqrt(double(n) + 1.0);
}

BranchTrajectory evolve_branch_at(const MotionalState<>& initial, const DriveParams& drive,
                                  const Eigen::VectorXd& times, DynamicsModel model,
                                  const EvolveOptions& opts) {
  drive.validate();
  check_times(times);
  if (std::abs(initial.norm_sq() - 1.0) > 1e-8)
    throw std::invalid_argument("evolve: initial state must be normalized");

  const double t_max = times[times.size() - 1];
  BranchTrajectory out;
  out.model = model;
  out.times = times;
  out.alpha.resize(times.size());

  if (model == DynamicsModel::closed) {
    const int n_max = opts.n_max > 0
                          ? opts.n_max
                          : auto_basis(top_occupied(initial), drive, t_max);
    for (Eigen::Index k = 0; k < times.size(); ++k) out.alpha[k] = alpha_closed(times[k], drive);
    if (opts.keep_states) {
      const int dim = n_max + 1;
      Eigen::MatrixXcd embed = Eigen::MatrixXcd::Zero(dim, 1);
      embed_initial(initial, top_occupied(initial), embed, 0);
      Eigen::VectorXcd psi0 = embed.col(0);
      // D(alpha) = R_theta exp(-i r K) R_theta^dag with K = i(a^dag - a)
      Eigen::MatrixXcd a = lowering_operator<double>(n_max);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(kI * (a.adjoint() - a)));
      if (es.info() != Eigen::Success) throw Error("closed evolve: eigensolver failed");
      const Eigen::MatrixXcd& v = es.eigenvectors();
      const Eigen::VectorXd& lam = es.eigenvalues();
      out.states.reserve(times.size());
      for (Eigen::Index k = 0; k < times.size(); ++k) {
        const Cplx al = out.alpha[k];
        const double r = std::abs(al), theta = std::arg(al);
        Eigen::VectorXcd rot(dim), ph(lam.size());
        for (int n = 0; n < dim; ++n) rot[n] = std::exp(kI * (theta * n));
        for (Eigen::Index j = 0; j < lam.size(); ++j) ph[j] = std::exp(-kI * (r * lam[j]));
        Eigen::VectorXcd w = v.adjoint() * (rot.conjugate().asDiagonal() * psi0);
        w = ph.asDiagonal() * w;
        Eigen::VectorXcd psi = rot.asDiagonal() * (v * w);
        if (std::norm(psi[dim - 1]) > opts.truncation_tol)
          throw TruncationError("closed evolve: displaced state exceeds the working basis");
        out.states.emplace_back(MotionalState<>(std::move(psi)));
      }
    }
    return out;
  }

  const int n_max = opts.n_max > 0 ? opts.n_max : auto_basis(top_occupied(initial), drive, t_max);
  const int dim = n_max + 1;
  const double dt = resolve_dt(drive, model, t_max, opts);

  Eigen::MatrixXcd psi = Eigen::MatrixXcd::Zero(dim, 1);
  embed_initial(initial, top_occupied(initial), psi, 0);
  const Eigen::MatrixXcd psi_start = psi;

  auto prop = make_propagator(drive, model, dim);
  if (opts.keep_states) out.states.reserve(times.size());
  run_steps(*prop, psi, times, dt, opts.truncation_tol, [&](int k, const Eigen::MatrixXcd& p) {
    out.alpha[k] = panel_alpha(p, 0);
    if (opts.keep_states) out.states.emplace_back(MotionalState<>(p.col(0)));
  });

  if (opts.check_steps) {
    Eigen::MatrixXcd psi_half = psi_start;
    auto prop2 = make_propagator(drive, model, dim);
    run_steps(*prop2, psi_half, times, dt / 2.0, opts.truncation_tol, nullptr);
    const double diff = (psi_half - psi).cwiseAbs().maxCoeff();
    if (diff > opts.step_tol)
      throw StepSizeError("evolve: halving dt changed the final state by " +
                          std::to_string(diff) + " > " + std::to_string(opts.step_tol));
  }
  return out;
}

BranchTrajectory evolve_branch(const MotionalState<>& initial, const DriveParams& drive,
                               double t_final, DynamicsModel model, const EvolveOptions& opts) {
  if (!(t_final > 0.0)) throw std::invalid_argument("evolve: t_final must be > 0");
  const int n_out = std::min(opts.max_outputs, 513);
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(std::max(2, n_out), 0.0, t_final);
  return evolve_branch_at(initial, drive, times, model, opts);
}

AlphaFamily alpha_n_family(const std::vector<int>& n_list, const DriveParams& drive,
                           const Eigen::VectorXd& times, DynamicsModel model,
                           const EvolveOptions& opts) {
  drive.validate();
  check_times(times);
  if (n_list.empty()) throw std::invalid_argument("alpha_n_family: empty n list");

  AlphaFamily fam;
  fam.n_values = n_list;
  fam.times = times;
  const int cols = static_cast<int>(n_list.size());
  fam.alpha.resize(cols, times.size());
  fam.overlap.resize(cols, times.size());
  const double t_max = times[times.size() - 1];

  if (model == DynamicsModel::closed) {
    // n-independent displacement; the overlap kernel is the analytic
    // displaced-Fock element <n|D(2 alpha)|n>.
    const int n_top = *std::max_element(n_list.begin(), n_list.end());
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      const Cplx al = alpha_closed(times[k], drive);
      const double u = std::norm(al);
      const Eigen::VectorXd lag = laguerre_all(n_top, 0, 4.0 * u);
      for (int i = 0; i < cols; ++i) {
        fam.alpha(i, k) = al;
        fam.overlap(i, k) = Cplx(std::exp(-2.0 * u) * lag[n_list[i]], 0.0);
      }
    }
    if (opts.keep_states) {
      for (int i = 0; i < cols; ++i) {
        EvolveOptions o = opts;
        o.n_max = opts.n_max > 0 ? opts.n_max : auto_basis(n_list[i], drive, t_max);
        auto plus = evolve_branch_at(fock_state(n_list[i], o.n_max), drive, times, model, o);
        auto minus =
            evolve_branch_at(fock_state(n_list[i], o.n_max), drive.flipped(), times, model, o);
        fam.states[n_list[i]] = {std::move(plus.states), std::move(minus.states)};
      }
    }
    return fam;
  }

  const int n_top = *std::max_element(n_list.begin(), n_list.end());
  const int n_max = opts.n_max > 0 ? opts.n_max : auto_basis(n_top, drive, t_max);
  const int dim = n_max + 1;
  const double dt = resolve_dt(drive, model, t_max, opts);

  auto run_pair = [&](double step, bool record) {
    Eigen::MatrixXcd pp = Eigen::MatrixXcd::Zero(dim, cols);
    Eigen::MatrixXcd pm = Eigen::MatrixXcd::Zero(dim, cols);
    for (int i = 0; i < cols; ++i) {
      if (n_list[i] < 0 || n_list[i] > n_max)
        throw std::invalid_argument("alpha_n_family: n outside working basis");
      pp(n_list[i], i) = 1.0;
      pm(n_list[i], i) = 1.0;
    }
    auto prop_p = make_propagator(drive, model, dim);
    auto prop_m = make_propagator(drive.flipped(), model, dim);
    Eigen::MatrixXcd lab_p, lab_m;
    double t = 0.0;
    for (int k = 0; k < times.size(); ++k) {
      const double gap = times[k] - t;
      if (gap > 1e-18) {
        const int m = std::max(1, static_cast<int>(std::ceil(gap / step - 1e-9)));
        const double h = gap / m;
        for (int s = 0; s < m; ++s) {
          const double tm = t + (s + 0.5) * h;
          prop_p->step(tm, h, pp);
          prop_m->step(tm, h, pm);
          const double top =
              std::max(pp.row(dim - 1).cwiseAbs2().maxCoeff(), pm.row(dim - 1).cwiseAbs2().maxCoeff());
          if (top > opts.truncation_tol)
            throw TruncationError("alpha_n_family: top-of-basis population " +
                                  std::to_string(top) + "; enlarge the working basis");
        }
        t = times[k];
      }
      if (record) {
        prop_p->to_lab(t, pp, lab_p);
        prop_m->to_lab(t, pm, lab_m);
        for (int i = 0; i < cols; ++i) {
          fam.alpha(i, k) = panel_alpha(lab_p, i);
          fam.overlap(i, k) = lab_m.col(i).dot(lab_p.col(i));  // conjugates lab_m
        }
        if (opts.keep_states) {
          for (int i = 0; i < cols; ++i) {
            auto& entry = fam.states[n_list[i]];
            entry.first.emplace_back(MotionalState<>(lab_p.col(i)));
            entry.second.emplace_back(MotionalState<>(lab_m.col(i)));
          }
        }
      }
    }
    return std::make_pair(std::move(pp), std::move(pm));
  };

  auto final_full = run_pair(dt, true);
  if (opts.check_steps) {
    auto final_half = run_pair(dt / 2.0, false);
    const double diff = std::max((final_full.first - final_half.first).cwiseAbs().maxCoeff(),
                                 (final_full.second - final_half.second).cwiseAbs().maxCoeff());
    if (diff > opts.step_tol)
      throw StepSizeError("alpha_n_family: halving dt changed the final states by " +
                          std::to_string(diff) + " > " + std::to_string(opts.step_tol));
  }
  return fam;
}

}  // namespace ionphase
