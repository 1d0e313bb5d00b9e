#include <doctest.h>

#include <cmath>

#include "ionphase/observables.hpp"
#include "ionphase/rng.hpp"

using namespace ionphase;

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

TEST_SUITE("observables") {

TEST_CASE("ground-state contrast") {
  DriveParams d = reference_drive();
  CHECK(contrast_ground(0.0, d) == 1.0);
  const double t_rev = kTwoPi / d.delta;
  for (int k = 1; k <= 3; ++k)
    CHECK(contrast_ground(k * t_rev, d) == doctest::Approx(1.0).epsilon(1e-12));
  const double amax = d.eta * d.delta_s / (2.0 * d.delta);
  CHECK(contrast_ground(0.5 * t_rev, d) ==
        doctest::Approx(std::exp(-2.0 * amax * amax)).epsilon(1e-12));
}

TEST_CASE("thermal contrast") {
  DriveParams d = reference_drive();
  SUBCASE("point distribution at n = 0 reduces to the ground form") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
    p[0] = 1.0;
    PhononDistribution<> dist(p);
    for (double t : {0.0, 4e-6, 11e-6, 17e-6})
      CHECK(contrast_thermal(t, d, dist, DynamicsModel::closed) ==
            doctest::Approx(contrast_ground(t, d)).epsilon(1e-12));
  }
  SUBCASE("unity at t = 0 for any initial temperature") {
    PhononDistribution<> dist = thermal_distribution(20.0, 200);
    CHECK(contrast_thermal(0.0, d, dist, DynamicsModel::closed) == doctest::Approx(1.0).epsilon(1e-12));
    ThermalContrastOptions opts;
    opts.evolve.check_steps = false;
    CHECK(contrast_thermal(0.0, d, dist, DynamicsModel::rwa_n_dependent, opts) ==
          doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("thermal occupation suppresses the early contrast decay") {
    // at small excursion every displaced-Fock overlap shrinks with n; at
    // large excursion the higher-n overlaps ring and may exceed the n = 0 one
    PhononDistribution<> dist = thermal_distribution(5.0, 120);
    const double t = 1e-6;
    CHECK(contrast_thermal(t, d, dist, DynamicsModel::closed) < contrast_ground(t, d));
  }
  SUBCASE("loose distributions are rejected") {
    PhononDistribution<> dist = thermal_distribution(20.0, 40);  // deficit ~ 0.14
    CHECK_THROWS_AS(contrast_thermal(0.0, d, dist, DynamicsModel::closed), std::invalid_argument);
  }
}

TEST_CASE("blue-sideband signal") {
  SequenceParams seq;
  seq.omega0 = kTwoPi * 1e5;
  const double eta = 0.25;

  SUBCASE("unity at t_p = 0 with full fringe amplitude") {
    PhononDistribution<> dist = thermal_distribution(3.0, 200);
    Eigen::VectorXd pn = dist.p / dist.p.sum();
    CHECK(bsb_signal(0.0, PhononDistribution<>(pn), seq, eta) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("vacuum gives a pure sinusoid at infinite tau") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    p[0] = 1.0;
    PhononDistribution<> vac(p);
    for (double t : {1e-6, 5e-6, 13e-6}) {
      const double expected = 0.5 * (std::cos(eta * seq.omega0 * t) + 1.0);
      CHECK(bsb_signal(t, vac, seq, eta) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  SUBCASE("coherent collapse matches a direct summation oracle") {
    MotionalState<> st = coherent_state(std::complex<double>(std::sqrt(2.0), 0.0), 60);
    PhononDistribution<> dist(st.amplitudes.cwiseAbs2().eval());
    SequenceParams damped = seq;
    damped.tau = 3e-4;
    damped.fringe_amplitude = 0.9;
    for (double t : {2e-6, 17e-6, 41e-6}) {
      long double acc = 0.0L;  // independent re-summation, highest precision last
      for (int n = 60; n >= 0; --n)
        acc += static_cast<long double>(dist.p[n]) / 2.0L *
               (0.9L * std::exp(-static_cast<long double>(t) / 3e-4L) *
                    std::cos(0.25L * std::sqrt(static_cast<long double>(n) + 1.0L) *
                             static_cast<long double>(seq.omega0) * static_cast<long double>(t)) +
                1.0L);
      CHECK(std::abs(bsb_signal(t, dist, damped, eta) - static_cast<double>(acc)) <= 1e-12);
    }
  }
  SUBCASE("summation order does not matter") {
    PhononDistribution<> dist = thermal_distribution(2.0, 80);
    const double t = 23e-6;
    double fwd = 0.0, rev = 0.0;
    for (int n = 0; n <= 80; ++n)
      fwd += dist.p[n] / 2.0 * (std::cos(eta * std::sqrt(n + 1.0) * seq.omega0 * t) + 1.0);
    for (int n = 80; n >= 0; --n)
      rev += dist.p[n] / 2.0 * (std::cos(eta * std::sqrt(n + 1.0) * seq.omega0 * t) + 1.0);
    CHECK(std::abs(fwd - rev) <= 1e-14);
    CHECK(bsb_signal(t, dist, seq, eta) == doctest::Approx(fwd).epsilon(1e-13));
  }
  SUBCASE("exact Rabi model uses the Laguerre-corrected elements") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(9);
    p[7] = 1.0;
    PhononDistribution<> dist(p);
    const double t = 9e-6;
    const double expected = 0.5 * (std::cos(sideband_element(7, eta) * seq.omega0 * t) + 1.0);
    CHECK(bsb_signal(t, dist, seq, eta, RabiModel::exact) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("homodyne signal") {
  SequenceParams seq;
  SUBCASE("zero displacement leaves only the decay") {
    SequenceParams damped = seq;
    damped.tau = 1e-4;
    for (double t : {0.0, 5e-5, 2e-4})
      CHECK(homodyne_signal(t, 0.0, 1.3, damped) ==
            doctest::Approx(0.5 * (1.0 - std::exp(-t / 1e-4))).epsilon(1e-14));
  }
  SUBCASE("perfect overlap refocuses the spin") {
    CHECK(homodyne_signal(1e-5, 1.3, 0.0, seq) == 0.0);
  }
  SUBCASE("2 pi periodic in the beat phase") {
    for (int k = 0; k < 16; ++k) {
      const double phi = -3.0 + 0.4 * k;
      CHECK(std::abs(homodyne_signal(2e-5, 1.2, phi, seq) -
                     homodyne_signal(2e-5, 1.2, phi + kTwoPi, seq)) <= 1e-12);
    }
  }
  SUBCASE("fringe maximum grows with the displacement") {
    double prev = -1.0;
    for (double a = 0.0; a <= 2.5; a += 0.125) {
      double peak = 0.0;
      for (int j = 0; j < 128; ++j)
        peak = std::max(peak, homodyne_signal(1e-5, a, kTwoPi * j / 128.0, seq));
      CHECK(peak >= prev - 1e-12);
      prev = peak;
    }
  }
}

TEST_CASE("signals stay inside [0, 1]") {
  SeqRng rng(7);
  DriveParams d = reference_drive();
  SequenceParams seq;
  seq.omega0 = kTwoPi * 1e5;
  seq.tau = 2e-4;
  PhononDistribution<> dist = thermal_distribution(4.0, 150);
  for (int i = 0; i < 2000; ++i) {
    const double t = 1e-4 * rng.uniform();
    const double c = contrast_ground(t, d);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    SequenceParams s2 = seq;
    s2.fringe_amplitude = rng.uniform();
    const double q = bsb_signal(t, dist, s2, 0.05 + 0.4 * rng.uniform());
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
    const double h = homodyne_signal(t, 3.0 * rng.uniform(), 12.0 * (rng.uniform() - 0.5), seq);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
  }
}

TEST_CASE("finite-shot sampling") {
  std::vector<double> controls(1000);
  for (int i = 0; i < 1000; ++i) controls[i] = i;

  SUBCASE("degenerate probabilities") {
    MeasurementRecord zero =
        sample_record([](double) { return 0.0; }, controls, 50, 1, ScanType::contrast);
    MeasurementRecord one =
        sample_record([](double) { return 1.0; }, controls, 50, 1, ScanType::contrast);
    for (std::size_t i = 0; i < controls.size(); ++i) {
      CHECK(zero.successes[i] == 0);
      CHECK(one.successes[i] == 50);
    }
  }
  SUBCASE("binomial statistics at p = 1/2") {
    MeasurementRecord rec =
        sample_record([](double) { return 0.5; }, controls, 200, 12345, ScanType::contrast);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < controls.size(); ++i) mean += rec.fraction(i);
    mean /= controls.size();
    for (std::size_t i = 0; i < controls.size(); ++i) {
      const double dev = rec.successes[i] - 100.0;
      var += dev * dev;
    }
    var /= controls.size();
    CHECK(std::abs(mean - 0.5) <= 0.005);
    // binomial variance 50, sampling sd of the variance ~ 2.24
    CHECK(std::abs(var - 50.0) <= 3.0 * 2.24);
  }
  SUBCASE("deterministic per seed") {
    auto a = sample_record([](double c) { return 0.3 + 0.2 * std::sin(c); }, controls, 100, 9,
                           ScanType::bsb);
    auto b = sample_record([](double c) { return 0.3 + 0.2 * std::sin(c); }, controls, 100, 9,
                           ScanType::bsb);
    auto c = sample_record([](double c2) { return 0.3 + 0.2 * std::sin(c2); }, controls, 100, 10,
                           ScanType::bsb);
    CHECK(a.successes == b.successes);
    CHECK(a.successes != c.successes);
  }
  SUBCASE("probabilities outside [0,1] are rejected") {
    CHECK_THROWS_AS(
        sample_record([](double) { return 1.5; }, controls, 10, 1, ScanType::contrast),
        std::invalid_argument);
  }
}

}  // TEST_SUITE
