#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "regpoison/fit.hpp"
#include "regpoison/model.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

// Which outer objective the attacker climbs.
enum class AttackObjective {
  WTrain,       // training loss of the poisoned model on the clean train set
  WVal,         // MSE of the poisoned model on a validation set
  WTrainPrime,  // mean squared prediction shift vs. the clean model
};

inline const char* objective_name(AttackObjective o) {
  switch (o) {
    case AttackObjective::WTrain: return "wtr";
    case AttackObjective::WVal: return "wval";
    case AttackObjective::WTrainPrime: return "wtrprime";
  }
  return "?";
}

// Moments and KKT system of the training problem on the full poisoned set
// D u Dp of size N. The trained theta is a stationary point of
//   (1/N) sum (x_i . w + b - y_i)^2 + lambda Omega(w),
// and differentiating that condition through a poison point z_c = (x_c, y_c)
// gives the implicit parameter Jacobians below.
struct GradientContext {
  Eigen::MatrixXd sigma;  // (1/N) sum x_i x_i^T
  Eigen::VectorXd mu;     // (1/N) sum x_i
  Eigen::MatrixXd kkt;    // [[sigma + (lambda/2) d2_penalty, mu], [mu^T, 1]]
  Index N = 0;
  double condition = 0.0;  // eigenvalue-ratio condition number of kkt
  Eigen::LDLT<Eigen::MatrixXd> solver;
};

inline GradientContext make_gradient_context(const Dataset& poisoned,
                                             const ModelSpec& spec) {
  validate(spec);
  check_shapes(poisoned, "make_gradient_context");
  const Index N = poisoned.n();
  const Index d = poisoned.d();
  if (N == 0) throw DataError("make_gradient_context: empty dataset");

  GradientContext ctx;
  ctx.N = N;
  ctx.sigma = poisoned.X.transpose() * poisoned.X / static_cast<double>(N);
  ctx.mu = poisoned.X.colwise().mean();

  // Hessian of the penalty w.r.t. w: zero for ols and lasso (a.e.),
  // identity for ridge, (1 - rho) identity for the elastic net.
  double d2_penalty = 0.0;
  if (spec.kind == PenaltyKind::Ridge) d2_penalty = 1.0;
  if (spec.kind == PenaltyKind::ElasticNet) d2_penalty = 1.0 - spec.rho;

  ctx.kkt.resize(d + 1, d + 1);
  ctx.kkt.topLeftCorner(d, d) = ctx.sigma;
  ctx.kkt.topLeftCorner(d, d).diagonal().array() +=
      0.5 * spec.lambda * d2_penalty;
  ctx.kkt.topRightCorner(d, 1) = ctx.mu;
  ctx.kkt.bottomLeftCorner(1, d) = ctx.mu.transpose();
  ctx.kkt(d, d) = 1.0;

  ctx.solver.compute(ctx.kkt);
  // The kkt matrix is positive semidefinite ([w;b]^T K [w;b] is a mean of
  // squares plus the penalty curvature), so the 2-norm condition is the
  // extreme eigenvalue ratio. ldlt's rcond() is blind to exact singularity
  // here because its solve pseudo-inverts zero pivots.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(
      ctx.kkt, Eigen::EigenvaluesOnly);
  const double lo = eigs.eigenvalues().minCoeff();
  const double hi = eigs.eigenvalues().maxCoeff();
  ctx.condition = (ctx.solver.info() == Eigen::Success && lo > 0.0)
                      ? hi / lo
                      : std::numeric_limits<double>::infinity();
  return ctx;
}

namespace detail {

inline void check_context(const GradientContext& ctx, const char* where) {
  if (!(ctx.condition <= 1e12)) {
    throw NumericalError(std::string(where) +
                         ": kkt matrix near-singular (condition estimate " +
                         std::to_string(ctx.condition) + ")");
  }
}

inline void check_point(const GradientContext& ctx, const Theta& theta,
                        const Eigen::VectorXd& x_c, const char* where) {
  if (theta.d() != ctx.mu.size() || x_c.size() != ctx.mu.size()) {
    throw DataError(std::string(where) + ": dimension mismatch");
  }
}

}  // namespace detail

// d x (d+1) Jacobian of theta = (w, b) w.r.t. the poison features x_c:
// row j holds (dw/dx_cj, db/dx_cj). Derived from the stationarity condition;
// M = x_c w^T + (f(x_c) - y_c) I.
inline Eigen::MatrixXd grad_theta_wrt_x(const GradientContext& ctx,
                                        const Theta& theta,
                                        const Eigen::VectorXd& x_c,
                                        double y_c) {
  detail::check_point(ctx, theta, x_c, "grad_theta_wrt_x");
  detail::check_context(ctx, "grad_theta_wrt_x");
  const Index d = x_c.size();
  Eigen::MatrixXd M = x_c * theta.w.transpose();
  M.diagonal().array() += predict(theta, x_c) - y_c;
  Eigen::MatrixXd rhs(d + 1, d);  // columns: [M^T | w]^T per poison coord
  rhs.topRows(d) = M;             // (K^-1 [M^T|w]^T)^T = [M^T|w] K^-T; K sym
  rhs.bottomRows(1) = theta.w.transpose();
  return -(1.0 / static_cast<double>(ctx.N)) *
         ctx.solver.solve(rhs).transpose();
}

// (d+1) x (d+1) Jacobian of theta w.r.t. the full poison point (x_c, y_c):
// the first d rows are grad_theta_wrt_x, the last row is dtheta/dy_c.
inline Eigen::MatrixXd grad_theta_wrt_zy(const GradientContext& ctx,
                                         const Theta& theta,
                                         const Eigen::VectorXd& x_c,
                                         double y_c) {
  detail::check_point(ctx, theta, x_c, "grad_theta_wrt_zy");
  detail::check_context(ctx, "grad_theta_wrt_zy");
  const Index d = x_c.size();
  Eigen::MatrixXd out(d + 1, d + 1);
  out.topRows(d) = grad_theta_wrt_x(ctx, theta, x_c, y_c);
  Eigen::VectorXd xt(d + 1);
  xt.head(d) = x_c;
  xt(d) = 1.0;
  out.bottomRows(1) =
      (1.0 / static_cast<double>(ctx.N)) * ctx.solver.solve(xt).transpose();
  return out;
}

// Gradient of the attacker objective w.r.t. theta = (w, b), as a (d+1)
// vector. WTrain differentiates loss(data, theta, spec) (penalty included,
// sign(0) = 0); WVal differentiates mse(data, theta).
inline Eigen::VectorXd grad_objective(const Dataset& data, const Theta& theta,
                                      const ModelSpec& spec,
                                      AttackObjective objective) {
  check_shapes(data, "grad_objective");
  if (data.n() == 0) throw DataError("grad_objective: empty dataset");
  if (objective == AttackObjective::WTrainPrime) {
    throw ConfigError(
        "grad_objective: prediction-shift objective needs the clean model; "
        "use grad_objective_pred_diff");
  }
  const Index n = data.n();
  const Index d = data.d();
  Eigen::VectorXd r = residuals(data, theta);
  Eigen::VectorXd g(d + 1);
  g.head(d) = (2.0 / static_cast<double>(n)) * (data.X.transpose() * r);
  g(d) = (2.0 / static_cast<double>(n)) * r.sum();
  if (objective == AttackObjective::WTrain) {
    g.head(d) += spec.lambda * penalty_subgradient(theta, spec);
  }
  return g;
}

// Gradient w.r.t. theta of the prediction-shift objective
// (1/n) sum (f(x_i, theta) - f(x_i, theta0))^2 over `data`.
inline Eigen::VectorXd grad_objective_pred_diff(const Dataset& data,
                                                const Theta& theta,
                                                const Theta& theta0) {
  check_shapes(data, "grad_objective_pred_diff");
  if (data.n() == 0) throw DataError("grad_objective_pred_diff: empty dataset");
  const Index n = data.n();
  const Index d = data.d();
  Eigen::VectorXd diff = predict(theta, data.X) - predict(theta0, data.X);
  Eigen::VectorXd g(d + 1);
  g.head(d) = (2.0 / static_cast<double>(n)) * (data.X.transpose() * diff);
  g(d) = (2.0 / static_cast<double>(n)) * diff.sum();
  return g;
}

// Value of the prediction-shift objective itself.
inline double objective_pred_diff(const Dataset& data, const Theta& theta,
                                  const Theta& theta0) {
  check_shapes(data, "objective_pred_diff");
  if (data.n() == 0) throw DataError("objective_pred_diff: empty dataset");
  return (predict(theta, data.X) - predict(theta0, data.X)).squaredNorm() /
         static_cast<double>(data.n());
}

// Closed-form poison-point gradient of the prediction-shift objective for
// the unregularized model: with q = f(x_c, theta) - f(x_c, theta0),
//   dW'/dx_c = (2/N) q (w0 - 2 w),   dW'/dy_c = (2/N) q.
// This collapses the chain rule under two conditions that hold in its
// intended use (shift measured on the same set the moments come from, and
// y_c on the clean model's surface); see the unit tests for the exact frame.
// Returns a (d+1) vector (x part, then y part).
inline Eigen::VectorXd grad_objective_wtr_prime(const Dataset& data,
                                                const Theta& theta,
                                                const Theta& theta0,
                                                const Eigen::VectorXd& x_c,
                                                Index N,
                                                const ModelSpec& spec) {
  if (spec.kind != PenaltyKind::Ols) {
    throw ConfigError(
        "grad_objective_wtr_prime: closed form only valid without a penalty");
  }
  check_shapes(data, "grad_objective_wtr_prime");
  if (x_c.size() != data.d() || theta.d() != data.d() ||
      theta0.d() != data.d()) {
    throw DataError("grad_objective_wtr_prime: dimension mismatch");
  }
  if (N <= 0) throw DataError("grad_objective_wtr_prime: N must be positive");
  const double q = predict(theta, x_c) - predict(theta0, x_c);
  const double scale = 2.0 / static_cast<double>(N);
  Eigen::VectorXd g(x_c.size() + 1);
  g.head(x_c.size()) = scale * q * (theta0.w - 2.0 * theta.w);
  g(x_c.size()) = scale * q;
  return g;
}

}  // namespace regpoison
