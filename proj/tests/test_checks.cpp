#include <gtest/gtest.h>

#include "sohot/checks.hpp"
#include "sohot/errors.hpp"

using namespace sohot;

TEST(RelativeError, NormWise) {
  Matrix a(1, 2), b(1, 2);
  a << 1.0, 2.0;
  b << 1.0, 2.5;
  EXPECT_DOUBLE_EQ(relative_error(a, b), 0.5 / 2.5);
  EXPECT_EQ(relative_error(Matrix::Zero(2, 2), Matrix::Zero(2, 2)), 0.0);
  EXPECT_THROW(relative_error(Matrix::Zero(1, 2), Matrix::Zero(1, 3)), ShapeError);
}

TEST(NumericalGradient, Quadratic) {
  Matrix x(2, 1);
  x << 1.5, -2.0;
  const Matrix g = numerical_gradient([](const Matrix& m) { return m.squaredNorm(); }, x);
  EXPECT_NEAR(g(0), 3.0, 1e-9);
  EXPECT_NEAR(g(1), -4.0, 1e-9);
}

TEST(RunEquivalence, TwoSampleOddOrderIsNotRoundingNoise) {
  // Two centred samples are negatives of each other, so every odd-order scatter
  // vanishes and both routes return rounding noise around zero.
  EquivOptions opts;
  opts.orders = {3};
  opts.min_samples = opts.max_samples = 2;
  opts.trials = 50;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    opts.seed = seed;
    EXPECT_LE(run_equivalence(opts).max_rel_dev, 1e-9) << "seed " << seed;
  }
}

TEST(RunEquivalence, Errors) {
  EquivOptions opts;
  opts.trials = 0;
  EXPECT_THROW(run_equivalence(opts), ArgumentError);
  opts.trials = 1;
  opts.dims = {4096};
  opts.orders = {3};
  EXPECT_THROW(run_equivalence(opts), CapacityError);
}

TEST(RunGradcheck, ReportsEveryBlock) {
  GradCheckOptions opts;
  opts.instances = 3;
  opts.orders = {2, 5};
  const auto rows = run_gradcheck(opts);
  std::vector<std::string> names;
  for (const auto& row : rows) {
    names.push_back(row.block);
    EXPECT_EQ(row.instances, 3) << row.block;
    EXPECT_LE(row.max_rel_err, 1e-5) << row.block;
  }
  for (const char* block : {"cov_explicit", "mean", "kernelized_r2", "kernelized_r5", "zeta", "zeta_bar", "softmax",
                            "stream_projection", "full_objective"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), block), names.end()) << block;
  }
}

TEST(RunBench, SmallScenarioBothModes) {
  BenchOptions opts;
  opts.dims = {2};
  opts.orders = {2};
  opts.n_source = opts.n_target = 2;
  opts.repetitions = 1;
  const auto rows = run_bench(opts);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].wall_ns.has_value());
  EXPECT_TRUE(rows[1].wall_ns.has_value());
  EXPECT_EQ(rows[0].predicted_ops, cost_model(2, 2, 2, 2, CostMode::Explicit));
}

TEST(RunBench, ExplicitRowInfeasibleOverCap) {
  BenchOptions opts;
  opts.dims = {64};
  opts.orders = {3};
  opts.repetitions = 1;
  opts.coeff_cap = 100;
  const auto rows = run_bench(opts);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].wall_ns.has_value());
  EXPECT_TRUE(rows[1].wall_ns.has_value());
  EXPECT_NE(bench_csv(rows).find("explicit,64,20,3,3,infeasible,"), std::string::npos);
}
