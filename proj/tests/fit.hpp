#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fit {

struct Result {
  Eigen::VectorXd coef;  // lowest degree first
  double r2 = 0.0;
  double max_rel_residual = 0.0;
};

// Least-squares polynomial fit of y on x.
inline Result polynomial(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, degree + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (int k = 0; k <= degree; ++k, p *= x[static_cast<std::size_t>(i)]) a(i, k) = p;
    b(i) = y[static_cast<std::size_t>(i)];
  }
  Result r;
  r.coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd resid = b - a * r.coef;
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  r.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - resid.squaredNorm() / ss_tot;
  r.max_rel_residual = (resid.array().abs() / b.array().abs().max(1.0)).maxCoeff();
  return r;
}

}  // namespace fit
