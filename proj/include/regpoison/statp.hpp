#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "regpoison/attack.hpp"
#include "regpoison/model.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

// Feature mean and covariance of a dataset; the basis of the statistical
// attack, which only ever queries the victim model for predictions.
struct MomentEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // sample covariance, divisor n - 1
};

inline MomentEstimate estimate_moments(const Dataset& data) {
  check_shapes(data, "estimate_moments");
  const Index n = data.n();
  if (n < 2) {
    throw DataError("estimate_moments: need at least 2 rows, got " +
                    std::to_string(n));
  }
  MomentEstimate m;
  m.mean = data.X.colwise().mean();
  Eigen::MatrixXd centered = data.X.rowwise() - m.mean.transpose();
  m.covariance =
      centered.transpose() * centered / static_cast<double>(n - 1);
  return m;
}

// Draws multivariate-normal samples from the estimated moments and rounds
// every coordinate to the nearest corner of the [0,1] box (ties at 0.5 go
// to 1). Cholesky failures on a semidefinite covariance are repaired by
// adding 1e-9 I jitter before sampling.
inline Eigen::MatrixXd sample_corner_points(const MomentEstimate& moments,
                                            Index count, std::mt19937_64& rng) {
  const Index d = moments.mean.size();
  if (moments.covariance.rows() != d || moments.covariance.cols() != d) {
    throw DataError("sample_corner_points: covariance shape mismatch");
  }
  if (count < 1) throw ConfigError("sample_corner_points: count must be >= 1");

  Eigen::MatrixXd cov = moments.covariance;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-9;
    llt.compute(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("sample_corner_points: covariance not positive "
                           "semidefinite even after jitter");
    }
  }
  const Eigen::MatrixXd L = llt.matrixL();

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd out(count, d);
  Eigen::VectorXd z(d);
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < d; ++j) z(j) = gauss(rng);
    Eigen::VectorXd x = moments.mean + L * z;
    for (Index j = 0; j < d; ++j) out(i, j) = x(j) >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

// Response that maximizes the squared error of the victim model at x over
// the boundary values {0, 1}; the tie at f(x) = 0.5 resolves to 1.
inline double choose_boundary_response(const Theta& theta,
                                       const Eigen::VectorXd& x) {
  const double f = predict(theta, x);
  const double err0 = f * f;
  const double err1 = (f - 1.0) * (f - 1.0);
  return err1 >= err0 ? 1.0 : 0.0;
}

// Statistical poisoning: black-box with respect to training, using only the
// feature moments of `train` and predictions of the already-trained victim.
inline PoisonSet run_statp(const Dataset& train, const Theta& victim,
                           double alpha, std::uint64_t seed) {
  check_shapes(train, "run_statp");
  if (victim.d() != train.d()) {
    throw DataError("run_statp: model dimension mismatch");
  }
  const Index p = detail::poison_count(alpha, train.n());
  MomentEstimate moments = estimate_moments(train);
  std::mt19937_64 rng(seed);

  PoisonSet poison;
  poison.points.X = sample_corner_points(moments, p, rng);
  poison.points.y.resize(p);
  for (Index i = 0; i < p; ++i) {
    poison.points.y(i) =
        choose_boundary_response(victim, poison.points.X.row(i).transpose());
  }
  return poison;
}

}  // namespace regpoison
