#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include "ionphase/errors.hpp"

namespace ionphase {

template <typename Scalar>
using RealVector = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using ComplexVector = Eigen::Vector<std::complex<Scalar>, Eigen::Dynamic>;
template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

/// Axial trap description. The Raman difference wave vector enters the model
/// only through eta = delta_k * x0; x0 is kept as derived metadata.
struct TrapParams {
  double omega_ax = 0.0;  // axial angular frequency (rad/s)
  double eta = 0.0;       // Lamb-Dicke factor, dimensionless
  double x0 = 0.0;        // ground-state wave packet extension (m), metadata

  void validate() const {
    if (!(omega_ax > 0.0)) throw std::invalid_argument("TrapParams: omega_ax must be > 0");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("TrapParams: eta must be in (0,1)");
  }
};

/// One motional branch: probability amplitudes over the truncated Fock basis
/// |0..n_max>. Library constructors keep sum |c_n|^2 within
/// [1 - truncation_deficit, 1 + 1e-12] and report the deficit.
template <typename Scalar = double>
struct MotionalState {
  ComplexVector<Scalar> amplitudes;

  MotionalState() = default;
  explicit MotionalState(ComplexVector<Scalar> a) : amplitudes(std::move(a)) {
    if (amplitudes.size() < 2)
      throw std::invalid_argument("MotionalState: n_max must be >= 1");
  }

  int n_max() const { return static_cast<int>(amplitudes.size()) - 1; }
  Scalar norm_sq() const { return amplitudes.squaredNorm(); }
  Scalar truncation_deficit() const { return Scalar(1) - norm_sq(); }
};

/// Phonon number distribution p_n over |0..n_max>; entries are nonnegative
/// and sum to at most 1, with 1 - sum p_n the reported truncation deficit.
template <typename Scalar = double>
struct PhononDistribution {
  RealVector<Scalar> p;

  PhononDistribution() = default;
  explicit PhononDistribution(RealVector<Scalar> probs) : p(std::move(probs)) {
    if (p.size() < 1) throw std::invalid_argument("PhononDistribution: empty");
    for (Eigen::Index n = 0; n < p.size(); ++n) {
      if (p[n] < Scalar(0))
        throw std::invalid_argument("PhononDistribution: p_n must be >= 0");
    }
    if (p.sum() > Scalar(1) + Scalar(1e-12))
      throw std::invalid_argument("PhononDistribution: sum p_n exceeds 1");
  }

  int n_max() const { return static_cast<int>(p.size()) - 1; }
  Scalar truncation_deficit() const { return Scalar(1) - p.sum(); }
  Scalar mean() const {
    Scalar m = 0;
    for (Eigen::Index n = 0; n < p.size(); ++n) m += Scalar(n) * p[n];
    return m;
  }
};

/// Generalized Laguerre polynomial L_n^k(x) via the three-term recurrence
///   m L_m^k(x) = (2m - 1 + k - x) L_{m-1}^k(x) - (m - 1 + k) L_{m-2}^k(x),
/// which is the numerically stable direction for the ranges used here.
template <typename Scalar>
Scalar laguerre(int n, int k, Scalar x) {
  if (n < 0 || k < 0) throw std::invalid_argument("laguerre: need n >= 0, k >= 0");
  Scalar lm2 = Scalar(1);  // L_0^k
  if (n == 0) return lm2;
  Scalar lm1 = Scalar(1 + k) - x;  // L_1^k
  for (int m = 2; m <= n; ++m) {
    Scalar lm = ((Scalar(2 * m - 1 + k) - x) * lm1 - Scalar(m - 1 + k) * lm2) / Scalar(m);
    lm2 = lm1;
    lm1 = lm;
  }
  return lm1;
}

/// All of L_0^k(x) .. L_ntop^k(x) in one recurrence pass.
template <typename Scalar>
RealVector<Scalar> laguerre_all(int n_top, int k, Scalar x) {
  RealVector<Scalar> out(n_top + 1);
  out[0] = Scalar(1);
  if (n_top == 0) return out;
  out[1] = Scalar(1 + k) - x;
  for (int m = 2; m <= n_top; ++m)
    out[m] = ((Scalar(2 * m - 1 + k) - x) * out[m - 1] - Scalar(m - 1 + k) * out[m - 2]) / Scalar(m);
  return out;
}

/// ln(n!) through lgamma; factorials overflow double beyond n = 170.
inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// Fock state |n> embedded in a basis of size n_max + 1.
template <typename Scalar = double>
MotionalState<Scalar> fock_state(int n, int n_max) {
  if (n_max < 1 || n < 0 || n > n_max)
    throw std::invalid_argument("fock_state: need 0 <= n <= n_max, n_max >= 1");
  ComplexVector<Scalar> c = ComplexVector<Scalar>::Zero(n_max + 1);
  c[n] = Scalar(1);
  return MotionalState<Scalar>(std::move(c));
}

/// Coherent state |alpha>: c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!).
/// Throws TruncationError when the truncation deficit exceeds max_deficit,
/// i.e. when |alpha|^2 is not small against n_max.
template <typename Scalar = double>
MotionalState<Scalar> coherent_state(std::complex<Scalar> alpha, int n_max,
                                     Scalar max_deficit = Scalar(1e-6)) {
  if (n_max < 1) throw std::invalid_argument("coherent_state: n_max must be >= 1");
  ComplexVector<Scalar> c(n_max + 1);
  c[0] = std::exp(-std::norm(alpha) / Scalar(2));
  for (int n = 1; n <= n_max; ++n) c[n] = c[n - 1] * alpha / std::sqrt(Scalar(n));
  const Scalar deficit = Scalar(1) - c.squaredNorm();
  if (deficit > max_deficit)
    throw TruncationError("coherent_state: truncation deficit " + std::to_string(double(deficit)) +
                          " exceeds bound " + std::to_string(double(max_deficit)) +
                          " (increase n_max)");
  return MotionalState<Scalar>(std::move(c));
}

/// Poisson phonon distribution of a coherent state with u = |alpha|^2.
template <typename Scalar = double>
RealVector<Scalar> coherent_phonon_pdf(Scalar u, int n_max) {
  RealVector<Scalar> p(n_max + 1);
  p[0] = std::exp(-u);
  for (int n = 1; n <= n_max; ++n) p[n] = p[n - 1] * u / Scalar(n);
  return p;
}

/// Thermal (geometric) phonon distribution p_n = nbar^n / (1+nbar)^{n+1}.
template <typename Scalar = double>
PhononDistribution<Scalar> thermal_distribution(Scalar nbar, int n_max) {
  if (nbar < Scalar(0)) throw std::invalid_argument("thermal_distribution: nbar must be >= 0");
  if (n_max < 1) throw std::invalid_argument("thermal_distribution: n_max must be >= 1");
  RealVector<Scalar> p(n_max + 1);
  p[0] = Scalar(1) / (Scalar(1) + nbar);
  const Scalar ratio = nbar / (Scalar(1) + nbar);
  for (int n = 1; n <= n_max; ++n) p[n] = p[n - 1] * ratio;
  return PhononDistribution<Scalar>(std::move(p));
}

/// Diagonal displaced-Fock matrix element <n|D(beta)|n> = e^{-|beta|^2/2} L_n(|beta|^2).
/// Real-valued for every complex beta; returned as complex for uniformity with
/// the matrix oracle.
template <typename Scalar = double>
std::complex<Scalar> displaced_fock_overlap(int n, std::complex<Scalar> beta) {
  const Scalar b2 = std::norm(beta);
  return std::complex<Scalar>(std::exp(-b2 / Scalar(2)) * laguerre(n, 0, b2), Scalar(0));
}

/// Truncation policy shared by the call sites that build working bases:
/// max(32, ceil(8 (1 + |alpha|^2)), ceil(20 nbar)). Validated by doubling
/// tests in the self-test suite.
inline int default_n_max(double alpha_abs, double nbar = 0.0) {
  const double a2 = alpha_abs * alpha_abs;
  double m = 32.0;
  m = std::max(m, std::ceil(8.0 * (1.0 + a2)));
  m = std::max(m, std::ceil(20.0 * nbar));
  return static_cast<int>(m);
}

}  // namespace ionphase
