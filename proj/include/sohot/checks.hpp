#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sohot/kernel_align.hpp"

namespace sohot {

/// Central differences of `f` with respect to every entry of `x`.
Matrix numerical_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5);

/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf); 0 when
/// both are zero.
double relative_error(const Matrix& analytic, const Matrix& numeric);

struct GradBlockReport {
  std::string block;
  double max_rel_err = 0.0;
  int instances = 0;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::vector<int> orders{2, 3, 4};
  int instances = 20;
  double step = 1e-5;
};

/// Finite-difference check of every analytic gradient block on random
/// instances: explicit covariance, mean, kernelized per order, zeta, zeta_bar,
/// softmax, stream back-propagation through the tau projection and the full
/// objective.
std::vector<GradBlockReport> run_gradcheck(const GradCheckOptions& options);

struct EquivOptions {
  std::uint64_t seed = 0;
  std::vector<int> dims{2, 3, 4, 5, 6, 7, 8};
  std::vector<int> orders{2, 3, 4};
  int trials = 100;
  int min_samples = 2;
  int max_samples = 10;
  std::uint64_t coeff_cap = default_coeff_cap();
};

struct EquivReport {
  double max_rel_dev = 0.0;
  int trials = 0;
};

/// Kernelized vs explicit Frobenius distance on random instances. Throws
/// ArgumentError for trials < 1 and CapacityError when any (d, r) pair is
/// beyond the explicit coefficient cap.
EquivReport run_equivalence(const EquivOptions& options);

struct BenchRow {
  CostMode mode = CostMode::Explicit;
  int dim = 0;
  int n_source = 0;
  int n_target = 0;
  int order = 0;
  std::optional<std::int64_t> wall_ns;  ///< empty when the explicit path is infeasible
  std::uint64_t predicted_ops = 0;
};

struct BenchOptions {
  std::uint64_t seed = 0;
  std::vector<int> dims{4096};
  std::vector<int> orders{2, 3};
  int n_source = 20;
  int n_target = 3;
  int repetitions = 5;
  std::uint64_t coeff_cap = default_coeff_cap();
};

/// Median wall time of `repetitions` timed runs after one warm-up, explicit
/// and kernelized rows for every (d, r).
std::vector<BenchRow> run_bench(const BenchOptions& options);

/// mode,d,N,N_star,r,wall_ns,predicted_ops
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace sohot
