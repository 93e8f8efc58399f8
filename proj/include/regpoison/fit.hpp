#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "regpoison/model.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

namespace detail {

// Soft-thresholding operator for the l1 coordinate update.
inline double soft_threshold(double rho, double t) {
  if (rho > t) return rho - t;
  if (rho < -t) return rho + t;
  return 0.0;
}

// Weighted least squares via QR on the sqrt-weight-scaled design. Solves
// argmin (1/n) sum_i w_i r_i^2 (+ ridge term handled by caller adding to the
// normal equations instead). Rank deficiency -> NumericalError.
inline Theta ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& weights) {
  const Index n = X.rows();
  const Index d = X.cols();
  Eigen::MatrixXd A(n, d + 1);
  A.leftCols(d) = X;
  A.col(d).setOnes();
  Eigen::VectorXd rhs = y;
  Eigen::VectorXd sw = weights.array().sqrt();
  A.array().colwise() *= sw.array();
  rhs.array() *= sw.array();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < d + 1) {
    throw NumericalError("fit: rank-deficient design (rank " +
                         std::to_string(qr.rank()) + " < " +
                         std::to_string(d + 1) + ")");
  }
  Eigen::VectorXd sol = qr.solve(rhs);
  Theta theta;
  theta.w = sol.head(d);
  theta.b = sol(d);
  return theta;
}

inline Theta ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights, double lambda) {
  const Index n = X.rows();
  const Index d = X.cols();
  Eigen::MatrixXd A(n, d + 1);
  A.leftCols(d) = X;
  A.col(d).setOnes();
  // Stationarity: (2/n) A^T W (A theta - y) + lambda [w; 0] = 0.
  Eigen::MatrixXd AtWA =
      (2.0 / static_cast<double>(n)) *
      (A.transpose() * weights.asDiagonal() * A);
  Eigen::VectorXd AtWy = (2.0 / static_cast<double>(n)) *
                         (A.transpose() * (weights.asDiagonal() * y));
  for (Index j = 0; j < d; ++j) AtWA(j, j) += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(AtWA);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
    throw NumericalError("fit: near-singular ridge system");
  }
  Eigen::VectorXd sol = ldlt.solve(AtWy);
  Theta theta;
  theta.w = sol.head(d);
  theta.b = sol(d);
  return theta;
}

// Cyclic coordinate descent for the l1 / elastic-net objective
//   (1/n) sum_i w_i r_i^2 + lambda (l1_share ||w||_1 + l2_share 0.5 ||w||^2),
// bias unpenalized. Converges when no coordinate moves more than tol.
inline Theta cd_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& weights, double lambda,
                    double l1_share, double l2_share) {
  const Index n = X.rows();
  const Index d = X.cols();
  const double tol = 1e-9;
  const int max_sweeps = 100000;
  const double wsum = weights.sum();
  if (wsum <= 0.0) throw NumericalError("fit: nonpositive total weight");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = (weights.array() * y.array()).sum() / wsum;
  Eigen::VectorXd r = y.array() - b;  // r = y - Xw - b, maintained below

  // Per-coordinate curvature (2/n) sum_i w_i x_ij^2 plus the l2 term.
  Eigen::VectorXd curv(d);
  for (Index j = 0; j < d; ++j) {
    curv(j) = (2.0 / static_cast<double>(n)) *
                  (weights.array() * X.col(j).array().square()).sum() +
              lambda * l2_share;
  }

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;

    double b_new = b + (weights.array() * r.array()).sum() / wsum;
    r.array() -= (b_new - b);
    max_delta = std::max(max_delta, std::abs(b_new - b));
    b = b_new;

    for (Index j = 0; j < d; ++j) {
      if (curv(j) <= 0.0) continue;  // constant zero column: leave w_j at 0
      const double old = w(j);
      const double grad_part =
          (2.0 / static_cast<double>(n)) *
              (weights.array() * X.col(j).array() * r.array()).sum() +
          curv(j) * old - lambda * l2_share * old;
      const double w_new =
          soft_threshold(grad_part, lambda * l1_share) / curv(j);
      if (w_new != old) {
        r -= X.col(j) * (w_new - old);
        max_delta = std::max(max_delta, std::abs(w_new - old));
        w(j) = w_new;
      }
    }
    if (max_delta < tol) {
      Theta theta;
      theta.w = w;
      theta.b = b;
      return theta;
    }
  }
  throw NumericalError("fit: coordinate descent did not converge in " +
                       std::to_string(max_sweeps) + " sweeps");
}

}  // namespace detail

// Trains the linear model by exactly minimizing loss(data, theta, spec),
// with optional nonnegative per-row weights on the squared-error term.
inline Theta fit_weighted(const Dataset& data, const ModelSpec& spec,
                          const Eigen::VectorXd& weights) {
  validate(spec);
  check_shapes(data, "fit");
  const Index n = data.n();
  const Index d = data.d();
  if (n == 0) throw DataError("fit: empty dataset");
  if (d == 0) throw DataError("fit: dataset has no feature columns");
  if (weights.size() != n) {
    throw DataError("fit: weight vector length " +
                    std::to_string(weights.size()) + " != n = " +
                    std::to_string(n));
  }
  if ((weights.array() < 0.0).any()) {
    throw DataError("fit: negative row weight");
  }
  switch (spec.kind) {
    case PenaltyKind::Ols:
      return detail::ols_fit(data.X, data.y, weights);
    case PenaltyKind::Ridge:
      return detail::ridge_fit(data.X, data.y, weights, spec.lambda);
    case PenaltyKind::Lasso:
      return detail::cd_fit(data.X, data.y, weights, spec.lambda, 1.0, 0.0);
    case PenaltyKind::ElasticNet:
      return detail::cd_fit(data.X, data.y, weights, spec.lambda, spec.rho,
                            1.0 - spec.rho);
  }
  throw ConfigError("fit: unknown model kind");
}

inline Theta fit(const Dataset& data, const ModelSpec& spec) {
  return fit_weighted(data, spec, Eigen::VectorXd::Ones(data.n()));
}

}  // namespace regpoison
