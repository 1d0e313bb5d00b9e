#include <doctest.h>

#include <cmath>
#include <complex>

#include "ionphase/dynamics.hpp"
#include "ionphase/operators.hpp"

using namespace ionphase;
using Cplx = std::complex<double>;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

DriveParams reference_drive() {
  DriveParams d;
  d.delta_s = kTwoPi * 470.4e3;
  d.delta = kTwoPi * 42e3;
  d.eta = 0.25;
  d.omega_ax = kTwoPi * 1.35e6;
  return d;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("closed-form displacement") {
  DriveParams d = reference_drive();
  const double amax = d.eta * d.delta_s / (2.0 * d.delta);

  SUBCASE("starts at the origin") { CHECK(std::abs(alpha_closed(0.0, d)) == 0.0); }
  SUBCASE("full revival near 23.8 us for delta = 2 pi 42 kHz") {
    const double t_rev = kTwoPi / d.delta;
    CHECK(t_rev * 1e6 == doctest::Approx(23.8095).epsilon(1e-4));
    for (int k = 1; k <= 4; ++k)
      CHECK(std::abs(alpha_closed(k * t_rev, d)) <= 1e-12 * amax);
  }
  SUBCASE("maximum excursion at half the return time") {
    CHECK(std::abs(alpha_closed(0.5 * kTwoPi / d.delta, d)) == doctest::Approx(amax).epsilon(1e-12));
  }
  SUBCASE("spin sign flips the displacement") {
    const double t = 7e-6;
    CHECK(std::abs(alpha_closed(t, d) + alpha_closed(t, d.flipped())) <= 1e-15);
  }
  SUBCASE("resonant limit") {
    DriveParams res = d;
    res.delta = 0.0;
    const double t = 3e-6;
    CHECK(alpha_closed(t, res) == Cplx(-res.eta * res.delta_s * t / 4.0, 0.0));
    // continuous with the detuned form
    DriveParams tiny = d;
    tiny.delta = 1e-2;
    CHECK(std::abs(alpha_closed(t, tiny) - alpha_closed(t, res)) <= 1e-6 * std::abs(alpha_closed(t, res)));
  }
}

TEST_CASE("extract_alpha") {
  CHECK(std::abs(extract_alpha(fock_state(0, 12))) == 0.0);
  const Cplx alpha(1.3, -0.4);
  CHECK(std::abs(extract_alpha(coherent_state(alpha, 40)) - alpha) <= 1e-8);
  // displaced Fock states have <a> = alpha
  const Cplx beta(0.8, 0.5);
  const Eigen::MatrixXcd d = displacement_matrix(beta, 64);
  for (int n = 0; n <= 10; ++n) {
    MotionalState<> st(d.col(n).eval());
    CHECK(std::abs(extract_alpha(st) - beta) <= 1e-8);
  }
}

TEST_CASE("sideband element closed form matches the operator") {
  const double eta = 0.25;
  const Eigen::MatrixXcd s = hermitian_function(
      Eigen::MatrixXcd(eta * position_quadrature<double>(40)),
      [](double lam) { return Cplx(std::sin(lam), 0.0); });
  for (int n = 0; n < 30; ++n)
    CHECK(s(n + 1, n).real() == doctest::Approx(sideband_element(n, eta)).epsilon(1e-12));
}

TEST_CASE("free evolution leaves every model constant") {
  DriveParams d = reference_drive();
  d.delta_s = 0.0;
  MotionalState<> init = fock_state(1, 40);
  EvolveOptions opts;
  opts.check_steps = false;
  for (DynamicsModel model :
       {DynamicsModel::closed, DynamicsModel::rwa_n_dependent, DynamicsModel::full_wave}) {
    BranchTrajectory traj = evolve_branch(init, d, 5e-6, model, opts);
    for (Eigen::Index k = 0; k < traj.times.size(); ++k) CHECK(std::abs(traj.alpha[k]) <= 1e-12);
    const auto& last = traj.states.back();
    CHECK(std::abs(last.amplitudes[1]) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("Lamb-Dicke limit reproduces the closed form within 1%") {
  DriveParams d = reference_drive();
  d.eta = 0.05;
  d.delta_s = kTwoPi * 2.0e5;
  d.delta = kTwoPi * 2.0e4;
  const double period = kTwoPi / d.delta;
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(26, 0.0, period);
  double amax = 0.0;
  for (Eigen::Index i = 0; i < times.size(); ++i)
    amax = std::max(amax, std::abs(alpha_closed(times[i], d)));
  EvolveOptions opts;
  opts.check_steps = false;
  opts.keep_states = false;
  for (DynamicsModel model : {DynamicsModel::rwa_n_dependent, DynamicsModel::full_wave}) {
    BranchTrajectory traj = evolve_branch_at(fock_state(0, 31), d, times, model, opts);
    for (Eigen::Index i = 0; i < times.size(); ++i)
      CHECK(std::abs(traj.alpha[i] - alpha_closed(times[i], d)) <= 0.01 * amax);
  }
}

TEST_CASE("unitarity of the numeric propagators") {
  DriveParams d = reference_drive();
  EvolveOptions opts;
  opts.check_steps = false;
  for (DynamicsModel model : {DynamicsModel::rwa_n_dependent, DynamicsModel::full_wave}) {
    BranchTrajectory traj = evolve_branch(fock_state(0, 31), d, 3e-5, model, opts);
    for (const auto& st : traj.states) CHECK(std::abs(st.norm_sq() - 1.0) <= 1e-8);
  }
}

TEST_CASE("flipping the spin sign mirrors the trajectory") {
  DriveParams d = reference_drive();
  EvolveOptions opts;
  opts.check_steps = false;
  opts.keep_states = false;
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(9, 0.0, 2e-5);

  SUBCASE("exactly for the sideband model (parity)") {
    BranchTrajectory plus =
        evolve_branch_at(fock_state(0, 31), d, times, DynamicsModel::rwa_n_dependent, opts);
    BranchTrajectory minus = evolve_branch_at(fock_state(0, 31), d.flipped(), times,
                                              DynamicsModel::rwa_n_dependent, opts);
    for (Eigen::Index k = 0; k < times.size(); ++k)
      CHECK(std::abs(plus.alpha[k] + minus.alpha[k]) <= 1e-10);
  }
  SUBCASE("within the Lamb-Dicke error for the walking wave") {
    // flipping the force sign shifts the optical lattice by half a period
    // rather than mirroring it, so the branches deviate from exact mirror
    // symmetry at order eta^2 once the excursion is large
    BranchTrajectory plus =
        evolve_branch_at(fock_state(0, 31), d, times, DynamicsModel::full_wave, opts);
    BranchTrajectory minus =
        evolve_branch_at(fock_state(0, 31), d.flipped(), times, DynamicsModel::full_wave, opts);
    double amax = 0.0;
    for (Eigen::Index k = 0; k < times.size(); ++k)
      amax = std::max(amax, std::abs(plus.alpha[k]));
    for (Eigen::Index k = 0; k < times.size(); ++k)
      CHECK(std::abs(plus.alpha[k] + minus.alpha[k]) <= 0.02 * amax);

    DriveParams ld = d;
    ld.eta = 0.05;
    ld.delta_s = kTwoPi * 2e5;
    ld.delta = kTwoPi * 1e4;
    Eigen::VectorXd lt = Eigen::VectorXd::LinSpaced(5, 1e-5, 5e-5);
    BranchTrajectory lp = evolve_branch_at(fock_state(0, 31), ld, lt, DynamicsModel::full_wave, opts);
    BranchTrajectory lm =
        evolve_branch_at(fock_state(0, 31), ld.flipped(), lt, DynamicsModel::full_wave, opts);
    for (Eigen::Index k = 0; k < lt.size(); ++k)
      CHECK(std::abs(lp.alpha[k] + lm.alpha[k]) <= 2e-3 * std::abs(lp.alpha[k]) + 1e-6);
  }
}

TEST_CASE("step halving leaves the full_wave result unchanged") {
  DriveParams d = reference_drive();
  Eigen::VectorXd times(2);
  times << 5e-6, 1e-5;
  EvolveOptions opts;
  opts.check_steps = false;
  opts.keep_states = false;
  BranchTrajectory a = evolve_branch_at(fock_state(0, 31), d, times, DynamicsModel::full_wave, opts);
  EvolveOptions fine = opts;
  fine.dt = kTwoPi / d.omega_ax / 512.0;
  BranchTrajectory b = evolve_branch_at(fock_state(0, 31), d, times, DynamicsModel::full_wave, fine);
  double amax = 0.0;
  for (Eigen::Index k = 0; k < times.size(); ++k) amax = std::max(amax, std::abs(a.alpha[k]));
  for (Eigen::Index k = 0; k < times.size(); ++k)
    CHECK(std::abs(a.alpha[k] - b.alpha[k]) <= 1e-6 * amax);
}

TEST_CASE("error contracts") {
  DriveParams d = reference_drive();
  SUBCASE("too small a basis raises TruncationError") {
    EvolveOptions opts;
    opts.n_max = 6;
    opts.check_steps = false;
    CHECK_THROWS_AS(evolve_branch(fock_state(0, 6), d, 2e-5, DynamicsModel::rwa_n_dependent, opts),
                    TruncationError);
  }
  SUBCASE("coarse full_wave step fails the halving check") {
    EvolveOptions opts;
    opts.dt = kTwoPi / d.omega_ax / 64.0;
    CHECK_THROWS_AS(evolve_branch(fock_state(0, 31), d, 2e-5, DynamicsModel::full_wave, opts),
                    StepSizeError);
  }
  SUBCASE("full_wave rejects steps above the bound") {
    EvolveOptions opts;
    opts.dt = kTwoPi / d.omega_ax / 32.0;
    CHECK_THROWS_AS(evolve_branch(fock_state(0, 31), d, 2e-5, DynamicsModel::full_wave, opts),
                    std::invalid_argument);
  }
  SUBCASE("unnormalized input rejected") {
    MotionalState<> bad = fock_state(0, 8);
    bad.amplitudes[0] = 0.5;
    CHECK_THROWS_AS(evolve_branch(bad, d, 1e-5, DynamicsModel::closed), std::invalid_argument);
  }
}

TEST_CASE("alpha_n_family") {
  DriveParams d = reference_drive();
  EvolveOptions opts;
  opts.check_steps = false;
  opts.keep_states = false;

  SUBCASE("all branches start at the origin") {
    Eigen::VectorXd times(2);
    times << 0.0, 4e-6;
    AlphaFamily fam = alpha_n_family({0, 3, 9}, d, times, DynamicsModel::rwa_n_dependent, opts);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(fam.alpha(i, 0)) <= 1e-14);
  }

  SUBCASE("closed model uses the analytic kernel") {
    Eigen::VectorXd times(3);
    times << 0.0, 5e-6, 9e-6;
    AlphaFamily fam = alpha_n_family({0, 2, 7}, d, times, DynamicsModel::closed, opts);
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      const Cplx al = alpha_closed(times[k], d);
      const double u = std::norm(al);
      for (int i = 0; i < 3; ++i) {
        CHECK(fam.alpha(i, k) == al);
        const int n = fam.n_values[i];
        CHECK(fam.overlap(i, k).real() ==
              doctest::Approx(std::exp(-2.0 * u) * laguerre(n, 0, 4.0 * u)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("small-eta family matches the closed form") {
    DriveParams ld = d;
    ld.eta = 0.05;
    ld.delta_s = kTwoPi * 2.0e5;
    ld.delta = kTwoPi * 2.0e4;
    Eigen::VectorXd times(3);
    times << 4e-6, 1.2e-5, 2.4e-5;
    AlphaFamily fam = alpha_n_family({0}, ld, times, DynamicsModel::rwa_n_dependent, opts);
    for (Eigen::Index k = 0; k < times.size(); ++k)
      CHECK(std::abs(fam.alpha(0, k) - alpha_closed(times[k], ld)) <=
            0.01 * ld.eta * ld.delta_s / (2.0 * ld.delta));
  }

  SUBCASE("force magnitude decreases with n at eta = 0.25") {
    // the normalized coupling e^{-eta^2/2} L_n^1(eta^2)/(n+1) is below one and
    // decreasing over n <= 40 (it crosses zero near n ~ 28, where the
    // displacement magnitude has its node and turns around)
    double prev = 1.0;
    for (int n = 0; n <= 40; ++n) {
      const double f = sideband_element(n, 0.25) / (0.25 * std::sqrt(double(n) + 1.0));
      CHECK(f < 1.0);
      CHECK(f < prev);
      prev = f;
    }
    Eigen::VectorXd times(1);
    times << 0.1 * kTwoPi / d.delta;
    AlphaFamily fam =
        alpha_n_family({0, 4, 8, 12, 16, 20}, d, times, DynamicsModel::rwa_n_dependent, opts);
    for (int i = 1; i < 6; ++i)
      CHECK(std::abs(fam.alpha(i, 0)) < std::abs(fam.alpha(i - 1, 0)));
  }

  SUBCASE("branch states are retained on request") {
    EvolveOptions keep = opts;
    keep.keep_states = true;
    Eigen::VectorXd times(2);
    times << 3e-6, 6e-6;
    AlphaFamily fam = alpha_n_family({0, 1}, d, times, DynamicsModel::rwa_n_dependent, keep);
    REQUIRE(fam.states.count(0) == 1);
    CHECK(fam.states.at(0).first.size() == 2);
    CHECK(fam.states.at(0).second.size() == 2);
    const Cplx direct = fam.states.at(1).second[1].amplitudes.dot(fam.states.at(1).first[1].amplitudes);
    CHECK(std::abs(direct - fam.overlap(1, 1)) <= 1e-12);
  }
}

}  // TEST_SUITE
