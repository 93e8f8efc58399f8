#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "regpoison/fit.hpp"
#include "regpoison/gradients.hpp"
#include "regpoison/model.hpp"
#include "regpoison/rng.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

// How poison responses are initialized from the copied training rows.
enum class PoisonInit {
  InvFlip,  // y_c = 1 - y
  BFlip,    // y_c = 1 - y rounded to the nearest of {0, 1}, 0.5 -> 1
};

inline const char* init_name(PoisonInit init) {
  return init == PoisonInit::InvFlip ? "invflip" : "bflip";
}

// Which poison coordinates the attack optimizes.
enum class OptimVars { XOnly, XAndY };

inline const char* vars_name(OptimVars vars) {
  return vars == OptimVars::XOnly ? "x" : "xy";
}

struct LineSearchParams {
  double eta = 0.5;         // initial step size
  double beta = 0.75;       // step decay while searching for an improvement
  double eps = 1e-5;        // outer convergence: parameter change below this
  int max_outer_iters = 100;
  int budget = 20;          // objective evaluations per point update
};

struct AttackConfig {
  double alpha = 0.2;  // poison-to-clean ratio p/n
  PoisonInit init = PoisonInit::InvFlip;
  OptimVars variables = OptimVars::XAndY;
  AttackObjective objective = AttackObjective::WTrain;
  LineSearchParams line_search;
  bool frozen_theta = false;  // per-iteration gradients at iteration-start theta
  std::uint64_t seed = 0;
};

// Poison points plus the training rows they were copied from.
struct PoisonSet {
  Dataset points;
  std::vector<Index> source_rows;
};

struct AttackResult {
  PoisonSet poison;
  Theta theta;  // model trained on train + poison at termination
  std::vector<double> objective_trace;  // initial value, then one per iteration
  int outer_iterations = 0;
  bool converged = false;
};

namespace detail {

inline void validate_line_search(const LineSearchParams& ls) {
  if (!(ls.eta > 0.0)) throw ConfigError("attack.eta must be > 0");
  if (!(ls.beta > 0.0 && ls.beta < 1.0)) {
    throw ConfigError("attack.beta must lie in (0,1)");
  }
  if (!(ls.eps > 0.0)) throw ConfigError("attack.eps must be > 0");
  if (ls.max_outer_iters < 1) {
    throw ConfigError("attack.max_iters must be >= 1");
  }
  if (ls.budget < 1) throw ConfigError("attack.budget must be >= 1");
}

inline Index poison_count(double alpha, Index n) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("attack.alpha must lie in (0,1): got " +
                      std::to_string(alpha));
  }
  const Index p = static_cast<Index>(std::llround(alpha * static_cast<double>(n)));
  if (p < 1) {
    throw ConfigError("attack.alpha = " + std::to_string(alpha) +
                      " yields no poison points for n = " + std::to_string(n));
  }
  return p;
}

}  // namespace detail

// Seeds the poison set: p = round(alpha * n) training rows sampled without
// replacement, features copied verbatim, responses flipped per `init`.
inline PoisonSet init_poison(const Dataset& train, double alpha,
                             PoisonInit init, std::uint64_t seed) {
  check_shapes(train, "init_poison");
  if (train.n() == 0) throw DataError("init_poison: empty training set");
  const Index p = detail::poison_count(alpha, train.n());
  std::mt19937_64 rng(seed);
  std::vector<Index> rows = sample_without_replacement(train.n(), p, rng);

  PoisonSet poison;
  poison.source_rows = rows;
  poison.points.X.resize(p, train.d());
  poison.points.y.resize(p);
  for (Index i = 0; i < p; ++i) {
    poison.points.X.row(i) = train.X.row(rows[static_cast<std::size_t>(i)]);
    const double flipped = 1.0 - train.y(rows[static_cast<std::size_t>(i)]);
    poison.points.y(i) = init == PoisonInit::InvFlip
                             ? flipped
                             : (flipped >= 0.5 ? 1.0 : 0.0);
  }
  return poison;
}

// Gradient-ascent poisoning with per-point line search. Each outer iteration
// visits every poison point once: the implicit Jacobian of the trained
// parameters w.r.t. the point is chained with the objective gradient, the
// point moves along that direction (projected onto the [0,1] box before
// every evaluation, model exactly retrained for every candidate), and the
// best strictly-improving candidate within the evaluation budget is kept.
// The step starts at eta, shrinks by beta until a candidate improves, then
// extends by 1/beta while candidates keep improving. Stops when the fitted
// parameters move less than eps between iterations.
inline AttackResult run_attack(const Dataset& train, const Dataset& val,
                               const ModelSpec& spec,
                               const AttackConfig& config) {
  validate(spec);
  check_shapes(train, "run_attack");
  detail::validate_line_search(config.line_search);
  if (train.n() == 0) throw DataError("run_attack: empty training set");
  if (config.objective == AttackObjective::WVal) {
    check_shapes(val, "run_attack");
    if (val.n() == 0) {
      throw ConfigError(
          "attack.objective = wval requires a nonempty validation set");
    }
    if (val.d() != train.d()) {
      throw DataError("run_attack: validation dimension mismatch");
    }
  }

  AttackResult result;
  result.poison =
      init_poison(train, config.alpha, config.init, config.seed);
  const Index p = result.poison.points.n();
  const Index n = train.n();
  const Index d = train.d();

  const Theta theta0 = fit(train, spec);
  Dataset pooled = concat(train, result.poison.points);
  Theta theta = fit(pooled, spec);

  const auto eval = [&](const Theta& th) {
    switch (config.objective) {
      case AttackObjective::WTrain: return loss(train, th, spec);
      case AttackObjective::WVal: return mse(val, th);
      case AttackObjective::WTrainPrime:
        return objective_pred_diff(train, th, theta0);
    }
    return 0.0;
  };
  const auto grad_wrt_theta = [&](const Theta& th) {
    switch (config.objective) {
      case AttackObjective::WVal:
        return grad_objective(val, th, spec, AttackObjective::WVal);
      case AttackObjective::WTrainPrime:
        return grad_objective_pred_diff(train, th, theta0);
      case AttackObjective::WTrain:
      default:
        return grad_objective(train, th, spec, AttackObjective::WTrain);
    }
  };

  result.objective_trace.push_back(eval(theta));
  Eigen::VectorXd prev_params(d + 1);
  prev_params << theta.w, theta.b;

  const LineSearchParams& ls = config.line_search;
  const bool move_y = config.variables == OptimVars::XAndY;
  const Index zdim = move_y ? d + 1 : d;

  for (int iter = 1; iter <= ls.max_outer_iters; ++iter) {
    // Frozen mode takes every gradient at the iteration-start state;
    // acceptance below stays sequential either way.
    const Theta theta_iter = theta;
    const Dataset pooled_iter = config.frozen_theta ? pooled : Dataset{};

    for (Index c = 0; c < p; ++c) {
      const Index row = n + c;
      const Theta& gtheta = config.frozen_theta ? theta_iter : theta;
      const Dataset& gpool = config.frozen_theta ? pooled_iter : pooled;
      Eigen::VectorXd x_c = pooled.X.row(row).transpose();
      const double y_c = pooled.y(row);

      Eigen::VectorXd gz;
      try {
        GradientContext ctx = make_gradient_context(gpool, spec);
        const Eigen::MatrixXd jac =
            move_y ? grad_theta_wrt_zy(ctx, gtheta, x_c, y_c)
                   : grad_theta_wrt_x(ctx, gtheta, x_c, y_c);
        gz = jac * grad_wrt_theta(gtheta);
      } catch (const NumericalError&) {
        continue;  // near-singular system: leave this point alone this round
      }
      if (!gz.allFinite() || gz.norm() == 0.0) continue;

      Eigen::VectorXd z0(zdim);
      z0.head(d) = x_c;
      if (move_y) z0(d) = y_c;

      double best_obj = eval(theta);
      std::optional<Eigen::VectorXd> best_z;
      Theta best_theta;
      double step = ls.eta;
      bool improved = false;
      for (int k = 0; k < ls.budget; ++k) {
        Eigen::VectorXd z = (z0 + step * gz).cwiseMax(0.0).cwiseMin(1.0);
        pooled.X.row(row) = z.head(d).transpose();
        if (move_y) pooled.y(row) = z(d);
        bool fit_ok = true;
        Theta cand;
        try {
          cand = fit(pooled, spec);
        } catch (const NumericalError&) {
          fit_ok = false;  // unfittable candidate counts as non-improving
        }
        const double obj = fit_ok ? eval(cand) : -1.0;
        if (fit_ok && obj > best_obj) {
          best_obj = obj;
          best_z = z;
          best_theta = cand;
          improved = true;
          step /= ls.beta;
        } else if (improved) {
          break;  // past the peak along this direction
        } else {
          step *= ls.beta;
        }
      }

      if (best_z) {
        pooled.X.row(row) = best_z->head(d).transpose();
        if (move_y) pooled.y(row) = (*best_z)(d);
        theta = best_theta;
      } else {
        pooled.X.row(row) = x_c.transpose();  // restore probed row
        if (move_y) pooled.y(row) = y_c;
      }
    }

    result.objective_trace.push_back(eval(theta));
    result.outer_iterations = iter;
    Eigen::VectorXd params(d + 1);
    params << theta.w, theta.b;
    if ((params - prev_params).norm() < ls.eps) {
      result.converged = true;
      break;
    }
    prev_params = params;
  }

  result.poison.points.X = pooled.X.bottomRows(p);
  result.poison.points.y = pooled.y.tail(p);
  result.theta = theta;
  return result;
}

}  // namespace regpoison
