// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned here.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "sohot/checks.hpp"
#include "sohot/errors.hpp"
#include "sohot/trainer.hpp"

using namespace sohot;
using sohot::testing::random_matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "[x] ") + what;
  }
};

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

// ---- 1 --------------------------------------------------------------------

Verdict oracle_equivalence() {
  constexpr double kTol = 1e-9;
  constexpr double kBudget = 30.0;
  const auto start = Clock::now();
  EquivOptions opts;
  opts.seed = 1;
  opts.trials = 100;
  const EquivReport report = run_equivalence(opts);
  const double elapsed = seconds_since(start);
  Verdict v;
  v.require(report.trials >= 100, std::to_string(report.trials) + " instances, d in [2,8], r in {2,3,4}, N in [2,10]");
  v.require(report.max_rel_dev <= kTol, fmt("max rel dev %.3g <= 1e-9", report.max_rel_dev));
  v.require(elapsed < kBudget, fmt("%.2f s < 30 s", elapsed));
  return v;
}

// ---- 2 --------------------------------------------------------------------

Verdict gradient_suite() {
  constexpr double kTol = 1e-5;
  constexpr double kBudget = 120.0;
  const auto start = Clock::now();
  GradCheckOptions opts;
  opts.seed = 2;
  opts.instances = 20;
  opts.orders = {2, 3, 4};
  const auto rows = run_gradcheck(opts);
  const double elapsed = seconds_since(start);
  Verdict v;
  const std::vector<std::string> required{"cov_explicit",  "mean", "kernelized_r2",   "kernelized_r3",
                                          "kernelized_r4", "zeta", "zeta_bar",        "softmax",
                                          "stream_projection", "full_objective"};
  for (const auto& name : required) {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const GradBlockReport& r) { return r.block == name; });
    if (it == rows.end()) {
      v.require(false, name + " missing");
      continue;
    }
    v.require(it->max_rel_err <= kTol && it->instances >= 20,
              name + fmt(" %.2g", it->max_rel_err) + " x" + std::to_string(it->instances));
  }
  v.require(elapsed < kBudget, fmt("%.2f s < 120 s", elapsed));
  return v;
}

// ---- 3 --------------------------------------------------------------------

Verdict gradient_route_cross_check() {
  constexpr double kTol = 1e-9;
  constexpr int kInstances = 50;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(2, 8), count(2, 10);
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const int d = dim(rng);
    const Matrix x = random_matrix(rng, d, count(rng));
    const Matrix y = random_matrix(rng, d, count(rng), 1.3);
    const FeatureGrads k = grad_kernelized_align(x, y, 2);
    const FeatureGrads e = grad_explicit_cov_align(x, y);
    worst = std::max({worst, relative_error(k.source, e.source), relative_error(k.target, e.target)});
  }
  Verdict v;
  v.require(worst <= kTol, fmt("max rel err %.3g <= 1e-9", worst) + " over " + std::to_string(kInstances) + " instances");
  return v;
}

// ---- 4 --------------------------------------------------------------------

std::uint64_t binom(std::uint64_t n, std::uint64_t k) {
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) acc = acc * (n - k + i) / i;
  return static_cast<std::uint64_t>(acc);
}

// Number of nondecreasing index tuples, counted one by one.
std::uint64_t enumerate_multisets(int d, int r) {
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  std::uint64_t count = 0;
  while (true) {
    ++count;
    int k = r - 1;
    while (k >= 0 && idx[k] == d - 1) --k;
    if (k < 0) return count;
    ++idx[k];
    for (int j = k + 1; j < r; ++j) idx[j] = idx[k];
  }
}

Verdict tensor_structure() {
  std::mt19937_64 rng(4);
  Verdict v;

  int asym = 0, checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 5;
    const int r = 2 + trial % 4;
    const ScatterTensor t = compute_scatter(random_matrix(rng, d, 6), r);
    std::uniform_int_distribution<int> pick(0, d - 1);
    for (int s = 0; s < 10; ++s) {
      std::vector<int> idx(static_cast<std::size_t>(r));
      for (int& i : idx) i = pick(rng);
      const double base = t.at(idx);
      std::vector<int> perm = idx;
      std::sort(perm.begin(), perm.end());
      do {
        const double other = t.at(perm);
        asym += std::memcmp(&base, &other, sizeof(double)) != 0 ? 1 : 0;
        ++checked;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
  v.require(asym == 0, "super-symmetry bit-exact on " + std::to_string(checked) + " permutations");

  double min_eig = 0.0;
  for (int r : {2, 4}) {
    for (int d = 1; d <= 8; ++d) {
      for (int trial = 0; trial < 5; ++trial) {
        const ScatterTensor t = compute_scatter(random_matrix(rng, d, 2 + trial * 2), r);
        for (int j = 0; j < (r == 4 ? d : 1); ++j) {
          const std::vector<int> trailing = r == 4 ? std::vector<int>{j, j} : std::vector<int>{};
          Eigen::SelfAdjointEigenSolver<Matrix> eig(t.slice(trailing));
          min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
        }
      }
    }
  }
  v.require(min_eig >= -1e-9, fmt("even-order slices min eigenvalue %.3g >= -1e-9", min_eig));

  bool counts_ok = true;
  for (int d = 1; d <= 8; ++d) {
    for (int r = 1; r <= 5; ++r) {
      counts_ok = counts_ok && unique_coeff_count(d, r) == enumerate_multisets(d, r) &&
                  PackedLayout::get(d, r)->size() == binom(d + r - 1, r);
    }
  }
  counts_ok = counts_ok && unique_coeff_count(4096, 2) == binom(4097, 2) && unique_coeff_count(4096, 3) == binom(4098, 3);
  v.require(counts_ok, "coefficient counts = binom(d+r-1, r)");
  return v;
}

// ---- 5 --------------------------------------------------------------------

Verdict complexity() {
  constexpr int kDim = 4096, kN = 20, kNStar = 3;
  Verdict v;
  const double ratio2 = static_cast<double>(cost_model(kDim, kN, kNStar, 2, CostMode::Explicit)) /
                        static_cast<double>(cost_model(kDim, kN, kNStar, 2, CostMode::Kernelized));
  v.require(std::abs(ratio2 - 52.0) <= 0.2 * 52.0, fmt("cost-model ratio r=2 %.2f within 52 +- 20%%", ratio2));

  BenchOptions opts;
  opts.seed = 5;
  opts.dims = {kDim};
  opts.orders = {2, 3};
  const auto rows = run_bench(opts);
  const BenchRow* ex2 = nullptr;
  const BenchRow* kz2 = nullptr;
  const BenchRow* ex3 = nullptr;
  const BenchRow* kz3 = nullptr;
  for (const auto& row : rows) {
    const bool explicit_mode = row.mode == CostMode::Explicit;
    if (row.order == 2) (explicit_mode ? ex2 : kz2) = &row;
    if (row.order == 3) (explicit_mode ? ex3 : kz3) = &row;
  }
  if (ex2 && kz2 && ex2->wall_ns && kz2->wall_ns) {
    const double measured = static_cast<double>(*ex2->wall_ns) / static_cast<double>(std::max<std::int64_t>(*kz2->wall_ns, 1));
    v.require(measured >= 10.0, fmt("measured wall ratio r=2 %.1f >= 10", measured));
  } else {
    v.require(false, "r=2 rows missing");
  }
  v.require(ex3 != nullptr && !ex3->wall_ns && unique_coeff_count(kDim, 3) > (1ull << 30),
            "r=3 explicit infeasible (" + std::to_string(unique_coeff_count(kDim, 3)) + " > 2^30 coefficients)");
  if (kz3 != nullptr && kz3->wall_ns) {
    v.require(*kz3->wall_ns < 1'000'000'000, fmt("r=3 kernelized %.4f s < 1 s", *kz3->wall_ns * 1e-9));
  } else {
    v.require(false, "r=3 kernelized row missing");
  }
  return v;
}

// ---- 6 --------------------------------------------------------------------

double max_abs_diff(const StreamParams& a, const StreamParams& b) {
  return std::max({(a.w1 - b.w1).cwiseAbs().maxCoeff(), (a.b1 - b.b1).cwiseAbs().maxCoeff(),
                   (a.w2 - b.w2).cwiseAbs().maxCoeff(), (a.b2 - b.b2).cwiseAbs().maxCoeff()});
}

double max_abs_diff(const TwoStreamModel& a, const TwoStreamModel& b) {
  return std::max({max_abs_diff(a.source, b.source), max_abs_diff(a.target, b.target),
                   (a.w - b.w).cwiseAbs().maxCoeff(), (a.b - b.b).cwiseAbs().maxCoeff()});
}

Verdict baseline_reduction() {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  std::size_t steps = 0;
  bool same_length = true;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ShiftKnobs knobs;
    knobs.seed = seed;
    const DomainData data = generate(make_shift_spec(knobs));
    const TwoStreamModel init = TwoStreamModel::init({2, 32, 16, 3}, seed);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.align = AlignmentConfig::make(3);
    cfg.align.sigma1 = cfg.align.sigma2 = 0.0;
    TrainConfig pooled = cfg;
    pooled.pooled_baseline = true;

    std::vector<TwoStreamModel> reference;
    train(init, data.source_train, data.target_train, pooled, nullptr,
          [&](int, const TwoStreamModel& m, const AlignmentConfig&) { reference.push_back(m); });
    std::size_t step = 0;
    train(init, data.source_train, data.target_train, cfg, nullptr,
          [&](int, const TwoStreamModel& m, const AlignmentConfig&) {
            if (step < reference.size()) worst = std::max(worst, max_abs_diff(m, reference[step]));
            ++step;
          });
    same_length = same_length && step == reference.size();
    steps += step;
  }
  Verdict v;
  v.require(same_length, std::to_string(steps) + " steps over 3 seeds");
  v.require(worst <= kTol, fmt("max per-step parameter deviation %.3g <= 1e-12", worst));
  return v;
}

// ---- 7 --------------------------------------------------------------------

// Alignment strengths selected once on validation seeds 100-109 (disjoint from
// the evaluation seeds below) from sigma1 in {0,1e-3,1e-2,1e-1,1} x sigma2 in
// {0,1e-2,1e-1,1}. The weighted run doubles sigma1 so its r = 2 scatter
// prefactor sigma1/(rC) matches the unweighted sigma1/C.
constexpr double kBenchSigma1 = 1e-3;
constexpr double kBenchSigma2 = 1e-1;

double benchmark_accuracy(std::uint64_t seed, int mode) {
  ShiftKnobs knobs;
  knobs.seed = seed;
  const DomainData data = generate(make_shift_spec(knobs));
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.align = AlignmentConfig::make(3, 2, mode == 2);
  cfg.align.sigma1 = mode == 2 ? 2 * kBenchSigma1 : kBenchSigma1;
  cfg.align.sigma2 = kBenchSigma2;
  if (mode == 0) {
    cfg.pooled_baseline = true;
    cfg.align.sigma1 = cfg.align.sigma2 = 0.0;
  }
  const TrainResult res = train(TwoStreamModel::init({2, 32, 16, 3}, seed), data.source_train, data.target_train, cfg);
  return evaluate(res.model, data.target_test);
}

Verdict adaptation_benefit() {
  constexpr double kBudget = 600.0;
  constexpr int kSeeds = 10;
  const auto start = Clock::now();
  double st = 0.0, so = 0.0, so_zeta = 0.0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    st += benchmark_accuracy(seed, 0) / kSeeds;
    so += benchmark_accuracy(seed, 1) / kSeeds;
    so_zeta += benchmark_accuracy(seed, 2) / kSeeds;
  }
  const double elapsed = seconds_since(start);
  Verdict v;
  v.require(so > st, fmt("So %.2f%%", 100 * so) + fmt(" > S+T %.2f%%", 100 * st));
  v.require(so_zeta >= so - 0.005, fmt("So+zeta %.2f%% >= So - 0.5 points", 100 * so_zeta));
  v.require(elapsed < kBudget, fmt("%.1f s < 600 s", elapsed));
  return v;
}

// ---- 8 --------------------------------------------------------------------

// Drops the wall_ns column of a bench CSV.
std::string without_timings(const std::string& csv) {
  std::string out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t end = csv.find('\n', pos);
    if (end == std::string::npos) end = csv.size();
    std::vector<std::string> fields;
    std::size_t f = pos;
    while (f <= end) {
      std::size_t comma = csv.find(',', f);
      if (comma == std::string::npos || comma > end) comma = end;
      fields.push_back(csv.substr(f, comma - f));
      f = comma + 1;
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == 5) continue;
      out += fields[i] + (i + 1 < fields.size() ? "," : "\n");
    }
    pos = end + 1;
  }
  return out;
}

Verdict determinism() {
  using sohot::testing::CliSandbox;
  using sohot::testing::slurp;
  Verdict v;
  CliSandbox box("acceptance_determinism");
  auto twice = [&](const std::string& label, const std::string& args_a, const std::string& args_b,
                   const std::vector<std::pair<std::string, std::string>>& files, bool compare_stdout,
                   const std::function<std::string(const std::string&)>& filter = {}) {
    const auto a = box.run(args_a);
    const auto b = box.run(args_b);
    bool same = a.exit_code == 0 && b.exit_code == 0;
    for (const auto& [fa, fb] : files) {
      std::string ta = slurp(box.path(fa)), tb = slurp(box.path(fb));
      if (filter) {
        ta = filter(ta);
        tb = filter(tb);
      }
      same = same && !ta.empty() && ta == tb;
    }
    if (compare_stdout) same = same && a.out == b.out;
    v.require(same, label);
  };
  twice("gen", "gen --seed 11 --out a.csv", "gen --seed 11 --out b.csv", {{"a.csv", "b.csv"}}, false);
  twice("train", "train --features a.csv --out ra --order 3 --weighted --sigma1 1e-3 --sigma2 0.1 --epochs 15 --seed 4",
        "train --features a.csv --out rb --order 3 --weighted --sigma1 1e-3 --sigma2 0.1 --epochs 15 --seed 4",
        {{"ra/checkpoint.json", "rb/checkpoint.json"}, {"ra/metrics.csv", "rb/metrics.csv"}}, true);
  twice("eval", "eval --checkpoint ra/checkpoint.json --features a.csv",
        "eval --checkpoint rb/checkpoint.json --features a.csv", {}, true);
  twice("gradcheck", "gradcheck --seed 8 --instances 5", "gradcheck --seed 8 --instances 5", {}, true);
  twice("equiv", "equiv --seed 8", "equiv --seed 8", {}, true);
  twice("bench", "bench --dims 64 --orders 2,3 --reps 1 --out ba.csv", "bench --dims 64 --orders 2,3 --reps 1 --out bb.csv",
        {{"ba.csv", "bb.csv"}}, false, without_timings);
  twice("rerun", "rerun ra/manifest.json --out rc", "rerun ra/manifest.json --out rd",
        {{"ra/checkpoint.json", "rc/checkpoint.json"}, {"rc/metrics.csv", "rd/metrics.csv"}}, true);
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*check)();
  };
  const Criterion criteria[] = {
      {1, "oracle equivalence", oracle_equivalence},   {2, "gradient suite", gradient_suite},
      {3, "gradient route cross-check", gradient_route_cross_check}, {4, "tensor structure", tensor_structure},
      {5, "complexity reproduction", complexity},        {6, "baseline reduction", baseline_reduction},
      {7, "synthetic adaptation benefit", adaptation_benefit}, {8, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v.require(false, std::string("threw: ") + e.what());
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %d %s: %s -- %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
