#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "regpoison/errors.hpp"

namespace regpoison {

using Eigen::Index;

// A supervised regression set. X is n x d, y is n. Features produced by the
// preprocessing pipeline lie in [0,1]; the library does not re-check that on
// every call, only where an operation depends on it.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }
};

inline void check_shapes(const Dataset& data, const char* where) {
  if (data.X.rows() != data.y.size()) {
    throw DataError(std::string(where) + ": X has " +
                    std::to_string(data.X.rows()) + " rows but y has " +
                    std::to_string(data.y.size()) + " entries");
  }
}

// Row-wise concatenation; dimensions must agree.
inline Dataset concat(const Dataset& a, const Dataset& b) {
  check_shapes(a, "concat");
  check_shapes(b, "concat");
  if (a.n() == 0) return b;
  if (b.n() == 0) return a;
  if (a.d() != b.d()) {
    throw DataError("concat: dimension mismatch (" + std::to_string(a.d()) +
                    " vs " + std::to_string(b.d()) + ")");
  }
  Dataset out;
  out.X.resize(a.n() + b.n(), a.d());
  out.X << a.X, b.X;
  out.y.resize(a.n() + b.n());
  out.y << a.y, b.y;
  return out;
}

// Linear model parameters: prediction is x . w + b.
struct Theta {
  Eigen::VectorXd w;
  double b = 0.0;

  Index d() const { return w.size(); }
};

enum class PenaltyKind { Ols, Ridge, Lasso, ElasticNet };

inline const char* penalty_name(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::Ols: return "ols";
    case PenaltyKind::Ridge: return "ridge";
    case PenaltyKind::Lasso: return "lasso";
    case PenaltyKind::ElasticNet: return "elasticnet";
  }
  return "?";
}

// Model specification. The penalty applies to w only, never to the bias.
// rho is the l1 share for the elastic net and is ignored by the other kinds.
struct ModelSpec {
  PenaltyKind kind = PenaltyKind::Ols;
  double lambda = 0.0;
  double rho = 0.5;
};

inline void validate(const ModelSpec& spec) {
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda)) {
    throw ConfigError("model.lambda must be finite and >= 0");
  }
  if (spec.kind == PenaltyKind::Ols && spec.lambda != 0.0) {
    throw ConfigError("model.lambda must be 0 for ols");
  }
  if (spec.kind == PenaltyKind::ElasticNet &&
      !(spec.rho > 0.0 && spec.rho < 1.0)) {
    throw ConfigError("model.rho must lie in (0,1)");
  }
}

}  // namespace regpoison
