#include "ionphase/lsq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ionphase {
namespace lsq {

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& scale, Eigen::Index m) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = 1e-6 * (std::abs(x[j]) + scale[j]);
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x0, const LmOptions& opts) {
  LmResult res;
  const Eigen::Index n = x0.size();
  Eigen::VectorXd scale = opts.scale.size() == n ? opts.scale : Eigen::VectorXd::Ones(n);

  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd r = f(x);
  double cost = r.squaredNorm();
  double lambda = opts.lambda0;

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::MatrixXd jac = numeric_jacobian(f, x, scale, r.size());
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd jtr = jac.transpose() * r;

    bool stepped = false;
    for (int tries = 0; tries < 24; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      Eigen::VectorXd x_new = x + step;
      Eigen::VectorXd r_new = f(x_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        const double rel_drop = (cost - cost_new) / std::max(cost, 1e-300);
        const double rel_step = step.cwiseQuotient(x.cwiseAbs() + scale).cwiseAbs().maxCoeff();
        x = std::move(x_new);
        r = std::move(r_new);
        cost = cost_new;
        lambda = std::max(lambda * 0.4, 1e-14);
        stepped = true;
        if (rel_drop < opts.ftol || rel_step < opts.xtol) {
          res.converged = true;
          it = opts.max_iter;  // done
        }
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e14) break;
    }
    if (!stepped) {
      res.converged = true;  // stuck at a (local) minimum: gradient step rejected
      break;
    }
  }

  res.x = x;
  res.residuals = r;
  res.cost = cost;
  Eigen::MatrixXd jac = numeric_jacobian(f, x, scale, r.size());
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  res.covariance = jtj.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
  return res;
}

NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                     const NmOptions& opts) {
  const Eigen::Index n = x0.size();
  const int m = static_cast<int>(n) + 1;
  std::vector<Eigen::VectorXd> pts(m, x0);
  std::vector<double> val(m);
  // absolute initial spread: callers work in log/logit coordinates where a
  // fixed step is meaningful at any magnitude
  for (int i = 1; i < m; ++i) pts[i][i - 1] += opts.step;
  for (int i = 0; i < m; ++i) val[i] = f(pts[i]);

  NmResult res;
  std::vector<int> order(m);
  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
    const int best = order[0], worst = order[m - 1], second = order[m - 2];
    if (std::abs(val[worst] - val[best]) <=
        opts.ftol * (std::abs(val[best]) + std::abs(val[worst]) + 1e-300)) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= double(m - 1);

    Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
    const double f_refl = f(refl);
    if (f_refl < val[order[0]]) {
      Eigen::VectorXd expa = centroid + 2.0 * (centroid - pts[worst]);
      const double f_expa = f(expa);
      if (f_expa < f_refl) {
        pts[worst] = expa;
        val[worst] = f_expa;
      } else {
        pts[worst] = refl;
        val[worst] = f_refl;
      }
    } else if (f_refl < val[second]) {
      pts[worst] = refl;
      val[worst] = f_refl;
    } else {
      Eigen::VectorXd cont = centroid + 0.5 * (pts[worst] - centroid);
      const double f_cont = f(cont);
      if (f_cont < val[worst]) {
        pts[worst] = cont;
        val[worst] = f_cont;
      } else {
        for (int i = 0; i < m; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < m; ++i)
    if (val[i] < val[best]) best = i;
  res.x = pts[best];
  res.fmin = val[best];
  return res;
}

double golden_section(const std::function<double(double)>& f, double a, double b, double tol) {
  const double gr = 0.61803398874989484820;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

LineFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd* sigma) {
  const Eigen::Index n = x.size();
  if (y.size() != n || n < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (sigma) {
    if (sigma->size() != n) throw std::invalid_argument("fit_line: sigma length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!((*sigma)[i] > 0.0)) throw std::invalid_argument("fit_line: sigma must be > 0");
      w[i] = 1.0 / ((*sigma)[i] * (*sigma)[i]);
    }
  }
  const double sw = w.sum();
  const double sx = (w.array() * x.array()).sum();
  const double sy = (w.array() * y.array()).sum();
  const double sxx = (w.array() * x.array() * x.array()).sum();
  const double sxy = (w.array() * x.array() * y.array()).sum();
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 0.0)) throw std::invalid_argument("fit_line: degenerate abscissae");

  LineFit fit;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  fit.dof = static_cast<int>(n) - 2;
  double chi2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = y[i] - fit.slope * x[i] - fit.intercept;
    chi2 += w[i] * r * r;
  }
  fit.chi2 = chi2;
  double var_scale = 1.0;  // known sigmas
  if (!sigma) var_scale = fit.dof > 0 ? chi2 / fit.dof : 0.0;
  fit.slope_se = std::sqrt(var_scale * sw / det);
  fit.intercept_se = std::sqrt(var_scale * sxx / det);
  return fit;
}

}  // namespace lsq
}  // namespace ionphase
