#pragma once

// Test-only numerical oracles: finite differences, grid quadrature, and
// tolerance helpers. These stay independent of the library's gradient and
// density paths so they can vouch for them.

#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace testutil {

inline double rel_err(double got, double want, double floor = 1e-6) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

inline bool close_abs_or_rel(double got, double want, double abs_tol, double rel_tol) {
  const double diff = std::abs(got - want);
  if (diff <= abs_tol) return true;
  return diff <= rel_tol * std::abs(want);
}

// Central finite-difference gradient of a scalar function.
inline Eigen::VectorXd fd_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double up = f(xp);
    xp[i] = orig - h;
    const double down = f(xp);
    xp[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Central finite-difference Jacobian of a vector-valued map.
inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h = 1e-5) {
  const Eigen::VectorXd y0 = f(x);
  Eigen::MatrixXd jac(y0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double orig = xp[j];
    xp[j] = orig + h;
    const Eigen::VectorXd up = f(xp);
    xp[j] = orig - h;
    const Eigen::VectorXd down = f(xp);
    xp[j] = orig;
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

// Central finite-difference gradient over a matrix argument, entry by entry.
inline Eigen::MatrixXd fd_grad_matrix(const std::function<double(const Eigen::MatrixXd&)>& f,
                                      const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd xp = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double orig = xp(i, j);
      xp(i, j) = orig + h;
      const double up = f(xp);
      xp(i, j) = orig - h;
      const double down = f(xp);
      xp(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Dense trapezoid quadrature of exp(log_f) over a 2-D grid; used to validate
// closed-form posterior moments and marginals for the 2-D latent case.
struct Quadrature2D {
  double mass = 0.0;        // integral of f
  Eigen::Vector2d mean;     // E[z]
  Eigen::Matrix2d second;   // E[z z']
};

inline Quadrature2D quadrature_2d(
    const std::function<double(const Eigen::Vector2d&)>& log_f, double lo, double hi, int n) {
  Quadrature2D out;
  out.mean.setZero();
  out.second.setZero();
  const double step = (hi - lo) / (n - 1);
  double mass = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    for (int j = 0; j < n; ++j) {
      const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      Eigen::Vector2d z(lo + i * step, lo + j * step);
      const double f = std::exp(log_f(z)) * wi * wj;
      mass += f;
      mean += f * z;
      second += f * z * z.transpose();
    }
  }
  const double cell = step * step;
  out.mass = mass * cell;
  out.mean = mean / mass;
  out.second = second / mass;
  return out;
}

}  // namespace testutil
