#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "regpoison/types.hpp"

namespace regpoison {

inline double predict(const Theta& theta, const Eigen::VectorXd& x) {
  return theta.w.dot(x) + theta.b;
}

inline Eigen::VectorXd predict(const Theta& theta, const Eigen::MatrixXd& X) {
  return (X * theta.w).array() + theta.b;
}

inline Eigen::VectorXd residuals(const Dataset& data, const Theta& theta) {
  return predict(theta, data.X) - data.y;
}

// Penalty value Omega(w): 0 for ols, 0.5 ||w||^2 for ridge, ||w||_1 for
// lasso, rho ||w||_1 + (1 - rho) 0.5 ||w||^2 for the elastic net.
inline double penalty(const Theta& theta, const ModelSpec& spec) {
  switch (spec.kind) {
    case PenaltyKind::Ols:
      return 0.0;
    case PenaltyKind::Ridge:
      return 0.5 * theta.w.squaredNorm();
    case PenaltyKind::Lasso:
      return theta.w.lpNorm<1>();
    case PenaltyKind::ElasticNet:
      return spec.rho * theta.w.lpNorm<1>() +
             (1.0 - spec.rho) * 0.5 * theta.w.squaredNorm();
  }
  return 0.0;
}

// Subgradient of Omega at w, with sign(0) taken as 0 for the l1 part.
inline Eigen::VectorXd penalty_subgradient(const Theta& theta,
                                           const ModelSpec& spec) {
  const Eigen::VectorXd& w = theta.w;
  Eigen::VectorXd sgn = w.array().sign();
  switch (spec.kind) {
    case PenaltyKind::Ols:
      return Eigen::VectorXd::Zero(w.size());
    case PenaltyKind::Ridge:
      return w;
    case PenaltyKind::Lasso:
      return sgn;
    case PenaltyKind::ElasticNet:
      return spec.rho * sgn + (1.0 - spec.rho) * w;
  }
  return Eigen::VectorXd::Zero(w.size());
}

inline double mse(const Dataset& data, const Theta& theta) {
  check_shapes(data, "mse");
  if (data.n() == 0) throw DataError("mse: empty dataset");
  return residuals(data, theta).squaredNorm() / static_cast<double>(data.n());
}

// Training objective: mean squared error plus lambda * Omega(w).
inline double loss(const Dataset& data, const Theta& theta,
                   const ModelSpec& spec) {
  return mse(data, theta) + spec.lambda * penalty(theta, spec);
}

}  // namespace regpoison
