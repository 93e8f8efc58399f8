#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "regpoison/fit.hpp"
#include "regpoison/model.hpp"
#include "regpoison/rng.hpp"
#include "regpoison/trim.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median: empty input");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid),
                   v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(),
                   v.begin() + static_cast<std::ptrdiff_t>(mid - 1), v.end());
  return 0.5 * (v[mid - 1] + hi);
}

// Robust scale: 1.4826 * median absolute deviation about the median.
inline double mad_scale(const Eigen::VectorXd& r) {
  std::vector<double> v(r.data(), r.data() + r.size());
  const double med = median(v);
  for (double& x : v) x = std::abs(x - med);
  return 1.4826 * median(v);
}

}  // namespace detail

struct HuberParams {
  double epsilon = 1.35;  // clipping point in robust-scale units; must be > 1
  int max_iters = 1000;
  double tol = 1e-8;  // max parameter change that counts as converged
};

// The epsilon values the experiment harness grid-searches.
inline std::vector<double> huber_epsilon_grid() {
  return {1.1, 1.25, 1.35, 1.5, 2.0};
}

struct HuberResult {
  Theta theta;
  std::vector<double> objective_trace;  // robust objective per sweep
  int iterations = 0;
  double scale = 0.0;  // final residual scale estimate
};

// Huber regression via iteratively reweighted least squares. The residual
// scale is re-estimated each sweep as 1.4826 * MAD (floored at 1e-12), the
// clipping point is epsilon * scale, and rows get weight min(1, t / |r|).
inline HuberResult huber_fit(const Dataset& data, const ModelSpec& spec,
                             const HuberParams& params = {}) {
  validate(spec);
  check_shapes(data, "huber_fit");
  if (data.n() == 0) throw DataError("huber_fit: empty dataset");
  if (!(params.epsilon > 1.0)) {
    throw ConfigError("huber.epsilon must be > 1");
  }
  if (params.max_iters < 1) throw ConfigError("huber.max_iters must be >= 1");

  const Index n = data.n();
  HuberResult result;
  result.theta = fit(data, spec);

  for (int iter = 1; iter <= params.max_iters; ++iter) {
    Eigen::VectorXd r = residuals(data, result.theta);
    result.scale = std::max(detail::mad_scale(r), 1e-12);
    const double t = params.epsilon * result.scale;

    double objective = 0.0;
    Eigen::VectorXd weights(n);
    for (Index i = 0; i < n; ++i) {
      const double a = std::abs(r(i));
      objective += a <= t ? r(i) * r(i) : 2.0 * t * a - t * t;
      weights(i) = a <= t ? 1.0 : t / a;
    }
    objective = objective / static_cast<double>(n) +
                spec.lambda * penalty(result.theta, spec);
    result.objective_trace.push_back(objective);

    Theta next = fit_weighted(data, spec, weights);
    const double change =
        std::max((next.w - result.theta.w).lpNorm<Eigen::Infinity>(),
                 std::abs(next.b - result.theta.b));
    result.theta = next;
    result.iterations = iter;
    if (change < params.tol) return result;
  }
  throw NumericalError("huber_fit: no convergence in " +
                       std::to_string(params.max_iters) + " iterations");
}

struct RansacParams {
  Index initial_sample_size = 0;   // rows per trial fit; >= d+2 required
  double residual_threshold = -1;  // on |residual|; < 0 selects 2x the robust
                                   // scale of a full-data fit's residuals
  int max_trials = 100;
  Index poison_budget = 1;  // retain a trial only if outliers < this
};

// The trial sample sizes the harness grid-searches: five values linearly
// spaced from 25 to n.
inline std::vector<Index> ransac_size_grid(Index n) {
  std::vector<Index> grid;
  for (int i = 0; i < 5; ++i) {
    const double v = 25.0 + (static_cast<double>(n) - 25.0) *
                                static_cast<double>(i) / 4.0;
    Index s = static_cast<Index>(std::llround(v));
    s = std::max<Index>(1, std::min(s, n));
    if (grid.empty() || grid.back() != s) grid.push_back(s);
  }
  return grid;
}

struct RansacResult {
  Theta theta;  // refit on the winning trial's inliers
  std::vector<Index> inliers;
  int best_trial = -1;
  Index outliers = 0;
};

// Consensus fitting: each trial fits on a small random row sample, flags
// rows whose absolute residual exceeds the threshold, and is retained only
// if it flags fewer rows than the assumed poison budget. The retained trial
// with the most inliers wins (earliest trial on ties) and is refit on them.
inline RansacResult ransac_fit(const Dataset& data, const ModelSpec& spec,
                               const RansacParams& params,
                               std::uint64_t seed = 0) {
  validate(spec);
  check_shapes(data, "ransac_fit");
  const Index n = data.n();
  const Index d = data.d();
  if (n == 0) throw DataError("ransac_fit: empty dataset");
  if (params.initial_sample_size < d + 2) {
    throw ConfigError("ransac.initial_sample_size must be >= d+2 = " +
                      std::to_string(d + 2));
  }
  if (params.initial_sample_size > n) {
    throw ConfigError("ransac.initial_sample_size exceeds n = " +
                      std::to_string(n));
  }
  if (params.max_trials < 1) throw ConfigError("ransac.max_trials must be >= 1");
  if (params.poison_budget < 1) {
    throw ConfigError("ransac.poison_budget must be >= 1");
  }

  double threshold = params.residual_threshold;
  if (threshold < 0.0) {
    threshold = 2.0 * detail::mad_scale(residuals(data, fit(data, spec)));
  }
  const double thr2 = threshold * threshold;

  std::mt19937_64 rng(seed);
  RansacResult best;
  for (int trial = 0; trial < params.max_trials; ++trial) {
    std::vector<Index> rows =
        sample_without_replacement(n, params.initial_sample_size, rng);
    Theta candidate;
    try {
      candidate = fit(detail::take_rows(data, rows), spec);
    } catch (const NumericalError&) {
      continue;
    }
    Eigen::VectorXd r = residuals(data, candidate);
    std::vector<Index> inliers;
    inliers.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      if (r(i) * r(i) <= thr2) inliers.push_back(i);
    }
    const Index outliers = n - static_cast<Index>(inliers.size());
    if (outliers >= params.poison_budget) continue;
    Theta refit;
    try {
      refit = fit(detail::take_rows(data, inliers), spec);
    } catch (const NumericalError&) {
      continue;
    }
    if (best.best_trial < 0 ||
        inliers.size() > best.inliers.size()) {
      best.theta = refit;
      best.inliers = std::move(inliers);
      best.best_trial = trial;
      best.outliers = outliers;
    }
  }
  if (best.best_trial < 0) {
    throw NumericalError(
        "ransac_fit: no trial stayed under the poison budget; the residual "
        "threshold is likely misconfigured");
  }
  return best;
}

struct RoniParams {
  Index validation_size = 50;
  int trials = 5;        // validation draws averaged per candidate
  // Max acceptable mean validation-MSE increase. Exactly zero would let the
  // sign of rounding noise decide for points with no real effect.
  double tolerance = 1e-9;
};

struct RoniResult {
  Theta theta;  // fit on the accepted rows
  std::vector<Index> accepted;
  std::vector<Index> rejected;
};

// Influence screening: candidates are tried in seeded random order against
// a growing accepted set (seeded with a random d+2-row base) and kept only
// if adding them does not degrade mean validation MSE by more than the
// tolerance. Validation sets are drawn from the full data, outliers and all.
inline RoniResult roni_fit(const Dataset& data, const ModelSpec& spec,
                           const RoniParams& params, std::uint64_t seed = 0) {
  validate(spec);
  check_shapes(data, "roni_fit");
  const Index n = data.n();
  const Index base_size = data.d() + 2;
  if (params.validation_size < 1) {
    throw ConfigError("roni.validation_size must be >= 1");
  }
  if (params.validation_size >= n) {
    throw ConfigError("roni.validation_size must be < n = " +
                      std::to_string(n));
  }
  if (params.trials < 1) throw ConfigError("roni.trials must be >= 1");
  if (!std::isfinite(params.tolerance)) {
    throw ConfigError("roni.tolerance must be finite");
  }
  if (base_size >= n) {
    throw DataError("roni_fit: need more than d+2 rows");
  }

  std::mt19937_64 rng(seed);
  const std::vector<Index> order = shuffled_indices(n, rng);
  std::vector<Dataset> val_sets;
  val_sets.reserve(static_cast<std::size_t>(params.trials));
  for (int t = 0; t < params.trials; ++t) {
    val_sets.push_back(detail::take_rows(
        data, sample_without_replacement(n, params.validation_size, rng)));
  }
  const auto mean_val_mse = [&](const Theta& theta) {
    double total = 0.0;
    for (const Dataset& v : val_sets) total += mse(v, theta);
    return total / static_cast<double>(val_sets.size());
  };

  RoniResult result;
  result.accepted.assign(order.begin(), order.begin() + base_size);
  Theta current = fit(detail::take_rows(data, result.accepted), spec);
  double current_mse = mean_val_mse(current);

  for (std::size_t i = static_cast<std::size_t>(base_size); i < order.size();
       ++i) {
    const Index cand = order[i];
    std::vector<Index> with = result.accepted;
    with.push_back(cand);
    Theta trial = fit(detail::take_rows(data, with), spec);
    const double trial_mse = mean_val_mse(trial);
    if (trial_mse - current_mse <= params.tolerance) {
      result.accepted = std::move(with);
      current = trial;
      current_mse = trial_mse;
    } else {
      result.rejected.push_back(cand);
    }
  }
  std::sort(result.accepted.begin(), result.accepted.end());
  std::sort(result.rejected.begin(), result.rejected.end());
  result.theta = fit(detail::take_rows(data, result.accepted), spec);
  return result;
}

}  // namespace regpoison
