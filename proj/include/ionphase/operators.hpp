#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <stdexcept>

#include "ionphase/errors.hpp"
#include "ionphase/fock.hpp"

namespace ionphase {

/// Ladder operator a on the truncated basis: a|n> = sqrt(n)|n-1>.
template <typename Scalar = double>
ComplexMatrix<Scalar> lowering_operator(int n_max) {
  ComplexMatrix<Scalar> a = ComplexMatrix<Scalar>::Zero(n_max + 1, n_max + 1);
  for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(Scalar(n));
  return a;
}

/// Number operator diagonal (0, 1, ..., n_max).
template <typename Scalar = double>
RealVector<Scalar> number_diagonal(int n_max) {
  RealVector<Scalar> n(n_max + 1);
  for (int i = 0; i <= n_max; ++i) n[i] = Scalar(i);
  return n;
}

/// Position quadrature a + a^dag.
template <typename Scalar = double>
ComplexMatrix<Scalar> position_quadrature(int n_max) {
  ComplexMatrix<Scalar> a = lowering_operator<Scalar>(n_max);
  return a + a.adjoint().eval();
}

/// f(H) for Hermitian H via spectral decomposition. f maps a real eigenvalue
/// to a complex value (e.g. lambda -> exp(-i lambda t)).
template <typename Scalar, typename F>
ComplexMatrix<Scalar> hermitian_function(const ComplexMatrix<Scalar>& h, F&& f) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix<Scalar>> es(h);
  if (es.info() != Eigen::Success) throw Error("hermitian_function: eigensolver failed");
  const auto& lam = es.eigenvalues();
  ComplexVector<Scalar> d(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) d[i] = f(lam[i]);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

/// Dense matrix exponential by scaling and squaring with a Taylor series.
/// Kept deliberately simple: it is the brute-force reference against which
/// the spectral routes are validated.
template <typename Scalar = double>
ComplexMatrix<Scalar> expm_taylor(const ComplexMatrix<Scalar>& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("expm_taylor: matrix must be square");
  const Scalar norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  Scalar scale = Scalar(1);
  while (norm1 * scale > Scalar(0.5)) {
    scale /= Scalar(2);
    ++squarings;
  }
  ComplexMatrix<Scalar> b = a * scale;
  ComplexMatrix<Scalar> result = ComplexMatrix<Scalar>::Identity(n, n);
  ComplexMatrix<Scalar> term = ComplexMatrix<Scalar>::Identity(n, n);
  for (int k = 1; k <= 32; ++k) {
    term = (term * b / Scalar(k)).eval();
    result += term;
    if (term.cwiseAbs().maxCoeff() < Scalar(1e-20)) break;
  }
  for (int s = 0; s < squarings; ++s) result = (result * result).eval();
  return result;
}

/// Displacement operator D(beta) = exp(beta a^dag - beta^* a) on the
/// truncated basis, via one fixed spectral decomposition: with
/// beta = r e^{i theta},  D = R_theta exp(-i r K) R_theta^dag  where
/// K = i(a^dag - a) and R_theta = exp(i theta n). Fast path used by the
/// dynamics module; cross-checked against displacement_oracle.
template <typename Scalar = double>
ComplexMatrix<Scalar> displacement_matrix(std::complex<Scalar> beta, int n_max) {
  using C = std::complex<Scalar>;
  const int dim = n_max + 1;
  if (n_max < 1) throw std::invalid_argument("displacement_matrix: n_max must be >= 1");
  const Scalar r = std::abs(beta);
  if (r == Scalar(0)) return ComplexMatrix<Scalar>::Identity(dim, dim);
  const Scalar theta = std::arg(beta);

  ComplexMatrix<Scalar> a = lowering_operator<Scalar>(n_max);
  ComplexMatrix<Scalar> k = C(0, 1) * (a.adjoint() - a);
  ComplexMatrix<Scalar> u0 =
      hermitian_function(k, [&](Scalar lam) { return std::exp(C(0, -r * lam)); });

  ComplexVector<Scalar> rot(dim);
  for (int n = 0; n < dim; ++n) rot[n] = std::exp(C(0, theta * Scalar(n)));
  return rot.asDiagonal() * u0 * rot.conjugate().asDiagonal();
}

/// Brute-force displacement oracle: exp(beta a^dag - beta^* a) evaluated by
/// scaling-and-squaring from the ladder matrices. Precondition
/// n_max >= 4 (1 + |beta|^2). With verify = true the computation is repeated
/// at twice the dimension and the low-n block (n <= n_max/2) must agree to
/// tol, otherwise TruncationError is thrown.
template <typename Scalar = double>
ComplexMatrix<Scalar> displacement_oracle(std::complex<Scalar> beta, int n_max,
                                          bool verify = true, Scalar tol = Scalar(1e-10)) {
  if (n_max < 1) throw std::invalid_argument("displacement_oracle: n_max must be >= 1");
  if (Scalar(n_max) < Scalar(4) * (Scalar(1) + std::norm(beta)))
    throw std::invalid_argument("displacement_oracle: need n_max >= 4 (1 + |beta|^2)");

  auto build = [&](int nm) {
    ComplexMatrix<Scalar> a = lowering_operator<Scalar>(nm);
    ComplexMatrix<Scalar> gen = beta * a.adjoint() - std::conj(beta) * a;
    return expm_taylor(gen);
  };

  ComplexMatrix<Scalar> d1 = build(n_max);
  if (verify) {
    ComplexMatrix<Scalar> d2 = build(2 * n_max + 1);
    const int low = n_max / 2 + 1;
    const Scalar diff =
        (d2.topLeftCorner(low, low) - d1.topLeftCorner(low, low)).cwiseAbs().maxCoeff();
    if (diff > tol)
      throw TruncationError("displacement_oracle: low-n block unconverged at n_max = " +
                            std::to_string(n_max) + " (doubling changed it by " +
                            std::to_string(double(diff)) + ")");
  }
  return d1;
}

}  // namespace ionphase
