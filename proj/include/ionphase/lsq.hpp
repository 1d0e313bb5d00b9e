#pragma once

#include <Eigen/Dense>

#include <functional>

namespace ionphase {
namespace lsq {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iter = 200;
  double ftol = 1e-14;       // relative cost decrease
  double xtol = 1e-12;       // relative step size
  double lambda0 = 1e-3;     // initial damping
  Eigen::VectorXd scale;     // per-parameter characteristic scale (optional)
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::MatrixXd covariance;  // (J^T J)^{-1} at the solution
  Eigen::VectorXd residuals;
  double cost = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Damped least squares (Levenberg-Marquardt) with a central-difference
/// Jacobian. Residuals should already be weighted by 1/sigma so the
/// covariance is directly the parameter covariance.
LmResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x0, const LmOptions& opts = {});

struct NmOptions {
  int max_iter = 6000;
  double ftol = 1e-13;
  double step = 0.05;  // initial simplex spread per coordinate
};

struct NmResult {
  Eigen::VectorXd x;
  double fmin = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nelder-Mead downhill simplex, deterministic.
NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                     const NmOptions& opts = {});

/// Golden-section minimization of a unimodal 1-D function on [a, b].
double golden_section(const std::function<double(double)>& f, double a, double b,
                      double tol = 1e-12);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double chi2 = 0.0;
  int dof = 0;
};

/// Straight-line fit. With sigma: weighted least squares with known errors,
/// standard errors from the weight matrix. Without: ordinary least squares
/// with the residual variance estimate.
LineFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                 const Eigen::VectorXd* sigma = nullptr);

}  // namespace lsq
}  // namespace ionphase
