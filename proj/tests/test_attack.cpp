#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "regpoison/attack.hpp"
#include "regpoison/data_io.hpp"
#include "regpoison/fit.hpp"

namespace rp = regpoison;

namespace {

rp::Dataset rand_dataset(rp::Index n, rp::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  rp::Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (rp::Index i = 0; i < n; ++i) {
    for (rp::Index j = 0; j < d; ++j) data.X(i, j) = unit(rng);
    data.y(i) = unit(rng);
  }
  return data;
}

struct Fixture {
  rp::Dataset train;
  rp::Dataset val;
};

Fixture linear_fixture(std::uint64_t seed = 7) {
  rp::SynthResult synth = rp::synth_linear(60, 3, 0.05, seed);
  Fixture f;
  f.train.X = synth.data.X.topRows(40);
  f.train.y = synth.data.y.head(40);
  f.val.X = synth.data.X.bottomRows(20);
  f.val.y = synth.data.y.tail(20);
  return f;
}

bool datasets_equal(const rp::Dataset& a, const rp::Dataset& b) {
  return a.X.rows() == b.X.rows() && a.X.cols() == b.X.cols() &&
         a.X == b.X && a.y == b.y;
}

}  // namespace

TEST(InitPoison, InvFlipMirrorsResponsesAndCopiesFeatures) {
  rp::Dataset train = rand_dataset(50, 3, 11);
  rp::PoisonSet ps = rp::init_poison(train, 0.2, rp::PoisonInit::InvFlip, 3);
  ASSERT_EQ(ps.points.n(), 10);
  ASSERT_EQ(ps.source_rows.size(), 10u);
  for (rp::Index i = 0; i < ps.points.n(); ++i) {
    const rp::Index src = ps.source_rows[static_cast<std::size_t>(i)];
    EXPECT_EQ(ps.points.X.row(i), train.X.row(src));
    EXPECT_DOUBLE_EQ(ps.points.y(i), 1.0 - train.y(src));
  }
  // Sampling is without replacement.
  std::vector<rp::Index> rows = ps.source_rows;
  std::sort(rows.begin(), rows.end());
  EXPECT_EQ(std::adjacent_find(rows.begin(), rows.end()), rows.end());
}

TEST(InitPoison, BFlipRoundsToCornersWithTieGoingToOne) {
  rp::Dataset train;
  train.X.resize(3, 1);
  train.X << 0.1, 0.2, 0.3;
  train.y.resize(3);
  train.y << 0.2, 0.5, 0.9;  // flips to 0.8, 0.5, 0.1
  rp::PoisonSet ps = rp::init_poison(train, 0.9, rp::PoisonInit::BFlip, 1);
  ASSERT_EQ(ps.points.n(), 3);
  for (rp::Index i = 0; i < 3; ++i) {
    const rp::Index src = ps.source_rows[static_cast<std::size_t>(i)];
    const double flipped = 1.0 - train.y(src);
    EXPECT_DOUBLE_EQ(ps.points.y(i), flipped >= 0.5 ? 1.0 : 0.0);
  }
}

TEST(InitPoison, CountIsRoundedRateTimesN) {
  rp::Dataset train = rand_dataset(300, 2, 5);
  EXPECT_EQ(rp::init_poison(train, 0.2, rp::PoisonInit::InvFlip, 0).points.n(),
            60);
  EXPECT_EQ(
      rp::init_poison(train, 0.12, rp::PoisonInit::InvFlip, 0).points.n(), 36);

  rp::Dataset tiny = rand_dataset(10, 2, 6);
  EXPECT_THROW(rp::init_poison(tiny, 0.04, rp::PoisonInit::InvFlip, 0),
               rp::ConfigError);  // rounds to zero points
  EXPECT_THROW(rp::init_poison(tiny, 0.0, rp::PoisonInit::InvFlip, 0),
               rp::ConfigError);
  EXPECT_THROW(rp::init_poison(tiny, 1.2, rp::PoisonInit::InvFlip, 0),
               rp::ConfigError);
}

TEST(Attack, ObjectiveTraceNeverDecreases) {
  Fixture f = linear_fixture();
  const rp::ModelSpec spec{rp::PenaltyKind::Ridge, 0.01, 0.5};
  for (bool frozen : {false, true}) {
    rp::AttackConfig cfg;
    cfg.alpha = 0.2;
    cfg.objective = rp::AttackObjective::WVal;
    cfg.line_search.max_outer_iters = 15;
    cfg.frozen_theta = frozen;
    cfg.seed = 9;
    rp::AttackResult res = rp::run_attack(f.train, f.val, spec, cfg);
    ASSERT_EQ(res.objective_trace.size(),
              static_cast<std::size_t>(res.outer_iterations) + 1);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
      EXPECT_GE(res.objective_trace[i], res.objective_trace[i - 1])
          << "frozen=" << frozen << " step " << i;
    }
    EXPECT_GT(res.objective_trace.back(), res.objective_trace.front())
        << "frozen=" << frozen;
  }
}

TEST(Attack, PoisonStaysInsideUnitBox) {
  Fixture f = linear_fixture(21);
  rp::AttackConfig cfg;
  cfg.alpha = 0.25;
  cfg.objective = rp::AttackObjective::WVal;
  cfg.line_search.max_outer_iters = 10;
  cfg.seed = 4;
  rp::AttackResult res =
      rp::run_attack(f.train, f.val, {rp::PenaltyKind::Ols, 0.0, 0.5}, cfg);
  EXPECT_GE(res.poison.points.X.minCoeff(), 0.0);
  EXPECT_LE(res.poison.points.X.maxCoeff(), 1.0);
  EXPECT_GE(res.poison.points.y.minCoeff(), 0.0);
  EXPECT_LE(res.poison.points.y.maxCoeff(), 1.0);
}

TEST(Attack, XOnlyKeepsResponsesAtTheirInitialization) {
  Fixture f = linear_fixture(33);
  rp::AttackConfig cfg;
  cfg.alpha = 0.2;
  cfg.variables = rp::OptimVars::XOnly;
  cfg.init = rp::PoisonInit::BFlip;
  cfg.line_search.max_outer_iters = 8;
  cfg.seed = 12;
  rp::AttackResult res =
      rp::run_attack(f.train, f.val, {rp::PenaltyKind::Ridge, 0.05, 0.5}, cfg);
  rp::PoisonSet init =
      rp::init_poison(f.train, cfg.alpha, cfg.init, cfg.seed);
  EXPECT_EQ(res.poison.points.y, init.points.y);
  EXPECT_EQ(res.poison.source_rows, init.source_rows);
  // Features did move on this fixture.
  EXPECT_NE(res.poison.points.X, init.points.X);
}

TEST(Attack, SameSeedReproducesEveryOutput) {
  Fixture f = linear_fixture(2);
  rp::AttackConfig cfg;
  cfg.alpha = 0.2;
  cfg.objective = rp::AttackObjective::WTrain;
  cfg.line_search.max_outer_iters = 6;
  cfg.seed = 77;
  const rp::ModelSpec spec{rp::PenaltyKind::Ridge, 0.01, 0.5};
  for (bool frozen : {false, true}) {
    cfg.frozen_theta = frozen;
    rp::AttackResult a = rp::run_attack(f.train, f.val, spec, cfg);
    rp::AttackResult b = rp::run_attack(f.train, f.val, spec, cfg);
    EXPECT_TRUE(datasets_equal(a.poison.points, b.poison.points));
    EXPECT_EQ(a.theta.w, b.theta.w);
    EXPECT_EQ(a.theta.b, b.theta.b);
    EXPECT_EQ(a.objective_trace, b.objective_trace);
    EXPECT_EQ(a.outer_iterations, b.outer_iterations);
  }
}

TEST(Attack, ConvergesOnSmallProblem) {
  rp::SynthResult synth = rp::synth_linear(30, 2, 0.05, 5);
  rp::AttackConfig cfg;
  cfg.alpha = 0.2;
  cfg.objective = rp::AttackObjective::WTrain;
  cfg.seed = 3;
  rp::AttackResult res = rp::run_attack(
      synth.data, rp::Dataset{}, {rp::PenaltyKind::Ridge, 0.1, 0.5}, cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.outer_iterations, cfg.line_search.max_outer_iters);
}

TEST(Attack, RaisesValidationErrorOfTheVictim) {
  Fixture f = linear_fixture(14);
  const rp::ModelSpec spec{rp::PenaltyKind::Ridge, 0.01, 0.5};
  const rp::Theta clean = rp::fit(f.train, spec);
  rp::AttackConfig cfg;
  cfg.alpha = 0.2;
  cfg.objective = rp::AttackObjective::WVal;
  cfg.line_search.max_outer_iters = 20;
  cfg.seed = 1;
  rp::AttackResult res = rp::run_attack(f.train, f.val, spec, cfg);
  EXPECT_GT(rp::mse(f.val, res.theta), rp::mse(f.val, clean));
}

TEST(Attack, NearSingularGradientsAreSkippedNotFatal) {
  // Second column nearly duplicates the first: the design is full rank for
  // fitting, but the optimality system is ill-conditioned, so every
  // gradient probe is skipped and the poison never moves.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  rp::Dataset train;
  train.X.resize(20, 2);
  train.y.resize(20);
  for (rp::Index i = 0; i < 20; ++i) {
    const double x = unit(rng);
    train.X(i, 0) = x;
    train.X(i, 1) = x + 1e-9 * unit(rng);
    train.y(i) = unit(rng);
  }
  rp::AttackConfig cfg;
  cfg.alpha = 0.2;
  cfg.seed = 6;
  rp::AttackResult res = rp::run_attack(
      train, rp::Dataset{}, {rp::PenaltyKind::Ols, 0.0, 0.5}, cfg);
  rp::PoisonSet init = rp::init_poison(train, cfg.alpha, cfg.init, cfg.seed);
  EXPECT_TRUE(datasets_equal(res.poison.points, init.points));
  EXPECT_TRUE(res.converged);
}

TEST(Attack, ValidatesConfiguration) {
  Fixture f = linear_fixture(1);
  const rp::ModelSpec spec{rp::PenaltyKind::Ols, 0.0, 0.5};
  rp::AttackConfig cfg;

  cfg.alpha = 1.5;
  EXPECT_THROW(rp::run_attack(f.train, f.val, spec, cfg), rp::ConfigError);
  cfg.alpha = 0.2;

  cfg.line_search.eta = 0.0;
  EXPECT_THROW(rp::run_attack(f.train, f.val, spec, cfg), rp::ConfigError);
  cfg.line_search.eta = 0.5;

  cfg.line_search.beta = 1.0;
  EXPECT_THROW(rp::run_attack(f.train, f.val, spec, cfg), rp::ConfigError);
  cfg.line_search.beta = 0.75;

  cfg.line_search.budget = 0;
  EXPECT_THROW(rp::run_attack(f.train, f.val, spec, cfg), rp::ConfigError);
  cfg.line_search.budget = 20;

  cfg.objective = rp::AttackObjective::WVal;
  EXPECT_THROW(rp::run_attack(f.train, rp::Dataset{}, spec, cfg),
               rp::ConfigError);

  rp::Dataset empty;
  empty.X.resize(0, 2);
  empty.y.resize(0);
  cfg.objective = rp::AttackObjective::WTrain;
  EXPECT_THROW(rp::run_attack(empty, f.val, spec, cfg), rp::DataError);
}
