#include <doctest.h>

#include <cmath>
#include <complex>

#include "ionphase/fock.hpp"
#include "ionphase/operators.hpp"
#include "ionphase/rng.hpp"

using namespace ionphase;
using Cplx = std::complex<double>;

namespace {

// Independent oracle: evaluate the explicit series
//   L_n^k(x) = sum_i (-1)^i C(n+k, n-i) x^i / i!
// in quad precision; the alternating terms cancel catastrophically in double
// for the larger (n, x) of the tested range.
long double laguerre_series_oracle(int n, int k, long double x) {
  __float128 a = 1;
  for (int j = 1; j <= n; ++j) a = a * static_cast<__float128>(k + j) / static_cast<__float128>(j);
  __float128 sum = a;  // i = 0 term: C(n+k, n)
  for (int i = 0; i < n; ++i) {
    a = a * static_cast<__float128>(-x) * static_cast<__float128>(n - i) /
        (static_cast<__float128>(i + 1) * static_cast<__float128>(k + i + 1));
    sum += a;
  }
  return static_cast<long double>(sum);
}

}  // namespace

TEST_SUITE("fock") {

TEST_CASE("laguerre closed forms") {
  CHECK(laguerre(0, 0, 7.3) == 1.0);
  for (double x : {0.0, 1.0, 2.0}) CHECK(laguerre(1, 0, x) == doctest::Approx(1.0 - x));
  // frozen from the series oracle: L_2^1(2) = 3 - 6 + 2 = -1
  CHECK(laguerre(2, 1, 2.0) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("laguerre recurrence matches the explicit series") {
  for (int k = 0; k <= 2; ++k) {
    for (int n : {1, 3, 7, 12, 20, 30}) {
      for (double x : {0.5, 2.0, 7.3, 13.0, 25.0}) {
        const long double oracle = laguerre_series_oracle(n, k, x);
        const double got = laguerre(n, k, x);
        CHECK(std::abs(got - static_cast<double>(oracle)) <=
              1e-9 * std::max<long double>(fabsl(oracle), 1.0L));
      }
    }
  }
}

TEST_CASE("coherent state construction") {
  SUBCASE("vacuum") {
    MotionalState<> vac = coherent_state(Cplx(0, 0), 20);
    CHECK(vac.amplitudes[0] == Cplx(1, 0));
    CHECK(vac.amplitudes.tail(20).norm() == 0.0);
  }
  SUBCASE("p_1 at |alpha|^2 = 1 equals 1/e") {
    MotionalState<> st = coherent_state(Cplx(1, 0), 30);
    CHECK(std::norm(st.amplitudes[1]) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("normalization and reported deficit") {
    MotionalState<> st = coherent_state(Cplx(1, 1), 40);
    CHECK(std::abs(st.norm_sq() - 1.0) <= 1e-10);
    CHECK(st.norm_sq() <= 1.0 + 1e-12);
    CHECK(st.truncation_deficit() <= 1e-10);
  }
  SUBCASE("truncation bound enforced") {
    CHECK_THROWS_AS(coherent_state(Cplx(3, 0), 4), TruncationError);
  }
  SUBCASE("basis must have n_max >= 1") {
    ComplexVector<double> single(1);
    single[0] = 1.0;
    CHECK_THROWS_AS((void)MotionalState<>(single), std::invalid_argument);
  }
}

TEST_CASE("thermal distribution") {
  SUBCASE("ground state at nbar = 0") {
    PhononDistribution<> d = thermal_distribution(0.0, 10);
    CHECK(d.p[0] == 1.0);
    CHECK(d.p.tail(10).sum() == 0.0);
  }
  SUBCASE("geometric values at nbar = 1") {
    PhononDistribution<> d = thermal_distribution(1.0, 60);
    CHECK(d.p[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d.p[1] == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("truncated mean matches the exact tail correction") {
    for (double nbar : {0.5, 5.0, 12.0, 20.0, 25.0}) {
      const int n_max = static_cast<int>(20 * nbar) + 20;
      PhononDistribution<> d = thermal_distribution(nbar, n_max);
      const double deficit = std::pow(nbar / (1.0 + nbar), n_max + 1);
      const double expected_mean = nbar - deficit * (n_max + 1 + nbar);
      CHECK(d.mean() == doctest::Approx(expected_mean).epsilon(1e-6));
      CHECK(d.truncation_deficit() == doctest::Approx(deficit).epsilon(1e-9));
    }
  }
}

TEST_CASE("displaced Fock overlaps") {
  SUBCASE("identity displacement") {
    for (int n : {0, 3, 17}) CHECK(displaced_fock_overlap(n, Cplx(0, 0)) == Cplx(1, 0));
  }
  SUBCASE("vacuum case") {
    const Cplx beta(0.7, -1.1);
    CHECK(displaced_fock_overlap(0, beta).real() ==
          doctest::Approx(std::exp(-std::norm(beta) / 2)).epsilon(1e-14));
  }
  SUBCASE("matches the matrix-exponential oracle") {
    const Cplx beta(1.2, -0.3);
    const Eigen::MatrixXcd d = displacement_oracle(beta, 64, false);
    CHECK(std::abs(d(5, 5) - displaced_fock_overlap(5, beta)) <= 1e-10);
  }
}

TEST_CASE("displacement oracle") {
  SUBCASE("beta = 0 gives the identity") {
    const Eigen::MatrixXcd d = displacement_oracle(Cplx(0, 0), 8);
    CHECK((d - Eigen::MatrixXcd::Identity(9, 9)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("column zero reproduces the coherent-state amplitudes") {
    const Cplx alpha(0.7, 0.3);
    const Eigen::MatrixXcd d = displacement_oracle(alpha, 32);
    MotionalState<> coh = coherent_state(alpha, 32);
    CHECK((d.col(0) - coh.amplitudes).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("low-n block is unitary") {
    const Eigen::MatrixXcd d = displacement_oracle(Cplx(1.5, 0.5), 48, false);
    const Eigen::MatrixXcd g = d.adjoint() * d;
    CHECK((g.topLeftCorner(16, 16) - Eigen::MatrixXcd::Identity(16, 16)).cwiseAbs().maxCoeff() <=
          1e-10);
  }
  SUBCASE("diagonal matches the Laguerre closed form") {
    for (double r : {1.0, 2.5, 4.0}) {
      const Cplx beta = std::polar(r, 0.9);
      const Eigen::MatrixXcd d = displacement_oracle(beta, 128, false);
      for (int n = 0; n <= 20; ++n)
        CHECK(std::abs(d(n, n) - displaced_fock_overlap(n, beta)) <= 1e-9);
    }
  }
  SUBCASE("doubling check flags an unconverged block") {
    CHECK_THROWS_AS(displacement_oracle(Cplx(3.0, 0.0), 40, true), TruncationError);
  }
  SUBCASE("basis precondition enforced") {
    CHECK_THROWS_AS(displacement_oracle(Cplx(3.0, 0.0), 20), std::invalid_argument);
  }
}

TEST_CASE("spectral displacement matches the brute-force route") {
  for (const Cplx beta : {Cplx(0.8, 0.0), Cplx(-0.4, 1.1), Cplx(0.0, -1.6)}) {
    const Eigen::MatrixXcd fast = displacement_matrix(beta, 48);
    const Eigen::MatrixXcd slow = displacement_oracle(beta, 48, false);
    CHECK((fast.topLeftCorner(24, 24) - slow.topLeftCorner(24, 24)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("constructor normalization survives random draws") {
  SeqRng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double r = 2.0 * rng.uniform();
    const double th = 6.2831853 * rng.uniform();
    MotionalState<> st = coherent_state(std::polar(r, th), default_n_max(r));
    CHECK(st.norm_sq() <= 1.0 + 1e-12);
    CHECK(st.norm_sq() >= 1.0 - st.truncation_deficit() - 1e-12);
    CHECK(st.truncation_deficit() < 1e-6);
  }
}

TEST_CASE("basis sizing policy") {
  CHECK(default_n_max(0.0) == 32);
  CHECK(default_n_max(2.0) == 40);         // ceil(8 * 5)
  CHECK(default_n_max(0.0, 20.0) == 400);  // ceil(20 nbar)
}

}  // TEST_SUITE
