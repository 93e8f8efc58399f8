#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "regpoison/fit.hpp"
#include "regpoison/model.hpp"
#include "regpoison/rng.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

namespace detail {

inline Dataset take_rows(const Dataset& data,
                         const std::vector<Index>& rows) {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), data.d());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = data.X.row(rows[i]);
    out.y(static_cast<Index>(i)) = data.y(rows[i]);
  }
  return out;
}

}  // namespace detail

// Indices of the n rows with the lowest squared residuals under theta,
// ascending; exact residual ties resolve to the lower row index.
inline std::vector<Index> select_lowest_residuals(const Dataset& data,
                                                  const Theta& theta,
                                                  Index n) {
  check_shapes(data, "select_lowest_residuals");
  if (n < 1 || n > data.n()) {
    throw ConfigError("select_lowest_residuals: n = " + std::to_string(n) +
                      " out of range for N = " + std::to_string(data.n()));
  }
  Eigen::VectorXd r = residuals(data, theta);
  std::vector<std::pair<double, Index>> order;
  order.reserve(static_cast<std::size_t>(data.n()));
  for (Index i = 0; i < data.n(); ++i) order.emplace_back(r(i) * r(i), i);
  std::sort(order.begin(), order.end());
  std::vector<Index> keep(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
  std::sort(keep.begin(), keep.end());
  return keep;
}

struct TrimResult {
  Theta theta;
  std::vector<Index> subset;  // rows the winning restart kept, ascending
  double loss = std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // trimmed loss per iteration, winning restart
  int iterations = 0;
  int failed_restarts = 0;
};

// Trimmed training: alternates exact fits on the current subset with
// reselection of the n lowest-residual rows until the trimmed loss stops
// changing. Restarts from `restarts` random subsets and keeps the lowest
// final loss; a restart whose subset cannot be fit is discarded.
inline TrimResult trim_fit(const Dataset& data, const ModelSpec& spec,
                           Index n, int restarts = 20,
                           std::uint64_t seed = 0) {
  validate(spec);
  check_shapes(data, "trim_fit");
  if (n < 1 || n > data.n()) {
    throw ConfigError("trim_fit: n = " + std::to_string(n) +
                      " out of range for N = " + std::to_string(data.n()));
  }
  if (restarts < 1) throw ConfigError("trim_fit: restarts must be >= 1");

  // Exact-arithmetic fits make the loss a deterministic function of the
  // subset, so equality is the right stopping test; the iterative penalty
  // solvers get a relative guard instead.
  const bool exact = spec.kind == PenaltyKind::Ols ||
                     spec.kind == PenaltyKind::Ridge;
  const int max_rounds = 1000;

  TrimResult best;
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<Index> subset = sample_without_replacement(data.n(), n, rng);
    std::sort(subset.begin(), subset.end());

    std::vector<double> trace;
    Theta theta;
    double current = std::numeric_limits<double>::infinity();
    bool ok = true;
    bool settled = false;
    for (int round = 0; round < max_rounds; ++round) {
      Dataset sub = detail::take_rows(data, subset);
      try {
        theta = fit(sub, spec);
      } catch (const NumericalError&) {
        ok = false;
        break;
      }
      const double value = loss(sub, theta, spec);
      trace.push_back(value);
      if (round > 0) {
        const bool same =
            exact ? value == current
                  : std::abs(value - current) <=
                        1e-12 * std::max(1.0, std::abs(current));
        if (same) {
          settled = true;
          break;
        }
      }
      current = value;
      subset = select_lowest_residuals(data, theta, n);
    }
    if (!ok || !settled) {
      ++best.failed_restarts;
      continue;
    }
    if (trace.back() < best.loss) {
      best.theta = theta;
      best.subset = subset;
      best.loss = trace.back();
      best.trace = trace;
      best.iterations = static_cast<int>(trace.size());
    }
  }
  if (!std::isfinite(best.loss)) {
    throw NumericalError("trim_fit: every restart failed");
  }
  return best;
}

struct TrimOracleResult {
  Theta theta;
  std::vector<Index> subset;
  double loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double binomial_or_inf(Index n, Index k) {
  double v = 1.0;
  for (Index i = 0; i < k; ++i) {
    v *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (v > 1e18) return std::numeric_limits<double>::infinity();
  }
  return v;
}

// Calls visit(subset) for every size-k subset of 0..n-1 in lexicographic
// order.
template <typename F>
inline void for_each_subset(Index n, Index k, F&& visit) {
  std::vector<Index> combo(static_cast<std::size_t>(k));
  std::iota(combo.begin(), combo.end(), Index{0});
  while (true) {
    visit(combo);
    Index i = k - 1;
    while (i >= 0 && combo[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++combo[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) {
      combo[static_cast<std::size_t>(j)] =
          combo[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

}  // namespace detail

// Exhaustive reference for trim_fit: fits every size-n subset and returns
// the global minimizer of the trimmed loss (first subset in lexicographic
// order on ties). Refuses instances with more than 1e5 subsets.
inline TrimOracleResult trim_global_oracle(const Dataset& data,
                                           const ModelSpec& spec, Index n) {
  validate(spec);
  check_shapes(data, "trim_global_oracle");
  if (n < 1 || n > data.n()) {
    throw ConfigError("trim_global_oracle: n = " + std::to_string(n) +
                      " out of range for N = " + std::to_string(data.n()));
  }
  const double combos = detail::binomial_or_inf(data.n(), n);
  if (!(combos <= 1e5)) {
    throw ConfigError("trim_global_oracle: C(" + std::to_string(data.n()) +
                      "," + std::to_string(n) + ") exceeds the 1e5 budget");
  }

  TrimOracleResult best;
  bool any = false;
  detail::for_each_subset(data.n(), n, [&](const std::vector<Index>& combo) {
    Dataset sub = detail::take_rows(data, combo);
    Theta theta;
    try {
      theta = fit(sub, spec);
    } catch (const NumericalError&) {
      return;  // degenerate subset: not a candidate
    }
    const double value = loss(sub, theta, spec);
    if (!any || value < best.loss) {
      any = true;
      best.theta = theta;
      best.subset = combo;
      best.loss = value;
    }
  });
  if (!any) throw NumericalError("trim_global_oracle: no subset could be fit");
  return best;
}

struct Theorem2Report {
  double min_mse = 0.0;  // best clean-subset MSE achievable under theta_hat
  double bound = 0.0;    // (1 + alpha/(1-alpha)) * clean optimum loss
  double factor = 0.0;
  bool holds = false;
};

// Checks the trimmed-loss guarantee on an exhaustively solvable instance:
// the globally trimmed model theta_hat on the poisoned set admits a clean
// subset of size round((1-alpha) n) whose MSE is within factor
// 1 + alpha/(1-alpha) of the clean model's training loss. `clean` must be
// the first clean.n() rows of `poisoned`.
inline Theorem2Report check_theorem2_bound(const Dataset& clean,
                                           const Dataset& poisoned,
                                           const ModelSpec& spec,
                                           double alpha) {
  validate(spec);
  check_shapes(clean, "check_theorem2_bound");
  check_shapes(poisoned, "check_theorem2_bound");
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("check_theorem2_bound: alpha must lie in [0,1)");
  }
  const Index n = clean.n();
  if (poisoned.n() < n || poisoned.d() != clean.d() ||
      (poisoned.X.topRows(n).array() != clean.X.array()).any() ||
      (poisoned.y.head(n).array() != clean.y.array()).any()) {
    throw DataError(
        "check_theorem2_bound: clean rows must be a prefix of poisoned");
  }

  const Theta theta_hat = trim_global_oracle(poisoned, spec, n).theta;
  const Theta theta_star = fit(clean, spec);
  const double clean_loss = loss(clean, theta_star, spec);

  const Index dsize =
      static_cast<Index>(std::llround((1.0 - alpha) * static_cast<double>(n)));
  if (dsize < 1 || dsize > n) {
    throw ConfigError("check_theorem2_bound: degenerate subset size");
  }
  const double combos = detail::binomial_or_inf(n, dsize);
  if (!(combos <= 1e5)) {
    throw ConfigError("check_theorem2_bound: subset enumeration exceeds the "
                      "1e5 budget");
  }

  Theorem2Report report;
  report.min_mse = std::numeric_limits<double>::infinity();
  detail::for_each_subset(n, dsize, [&](const std::vector<Index>& combo) {
    Dataset sub = detail::take_rows(clean, combo);
    report.min_mse = std::min(report.min_mse, mse(sub, theta_hat));
  });
  report.factor = 1.0 + alpha / (1.0 - alpha);
  report.bound = report.factor * clean_loss;
  report.holds = report.min_mse <= report.bound + 1e-12;
  return report;
}

}  // namespace regpoison
