#include "sohot/checks.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "sohot/data.hpp"
#include "sohot/errors.hpp"
#include "sohot/losses.hpp"
#include "sohot/objective.hpp"

namespace sohot {

namespace {

Matrix random_normal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Central differences of f() over the `size` doubles at `data`, perturbed in place.
Vector fd_in_place(const std::function<double()>& f, double* data, Eigen::Index size, double h) {
  Vector out(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = f();
    data[i] = saved - h;
    const double down = f();
    data[i] = saved;
    out(i) = (up - down) / (2.0 * h);
  }
  return out;
}

template <typename Param>
double block_error(const std::function<double()>& f, Param& param, const Param& analytic, double h) {
  const Vector numeric = fd_in_place(f, param.data(), param.size(), h);
  const Matrix flat = Eigen::Map<const Vector>(analytic.data(), analytic.size());
  return relative_error(flat, numeric);
}

struct Tracker {
  std::vector<GradBlockReport> rows;
  void add(const std::string& block, double err) {
    for (auto& row : rows) {
      if (row.block == block) {
        row.max_rel_err = std::max(row.max_rel_err, err);
        ++row.instances;
        return;
      }
    }
    rows.push_back({block, err, 1});
  }
};

void check_feature_pair(Tracker& tracker, const std::string& block, Matrix src, Matrix tgt, const FeatureGrads& g,
                        const std::function<double(const Matrix&, const Matrix&)>& f, double h) {
  const double e_src = block_error([&] { return f(src, tgt); }, src, g.source, h);
  const double e_tgt = block_error([&] { return f(src, tgt); }, tgt, g.target, h);
  tracker.add(block, std::max(e_src, e_tgt));
}

std::vector<ClassPair> random_pairs(std::mt19937_64& rng, int classes, int dim) {
  std::vector<ClassPair> pairs;
  for (int c = 0; c < classes; ++c) {
    pairs.push_back({c, random_normal(rng, dim, uniform_int(rng, 2, 6)),
                     random_normal(rng, dim, uniform_int(rng, 2, 5)) * 1.3});
  }
  return pairs;
}

void check_objective(Tracker& tracker, std::mt19937_64& rng, int instance, double h) {
  const bool dual = instance % 2 == 1;
  ModelShape shape{3, 5, 4, 3};
  TwoStreamModel model = TwoStreamModel::init(shape, rng(), dual);
  // Distinct stream weights and a non-trivial classifier.
  model.target.w1 += random_normal(rng, shape.hidden, shape.input_dim, 0.3);
  model.target.w2 += random_normal(rng, shape.feature_dim, shape.hidden, 0.3);
  model.w = random_normal(rng, shape.feature_dim, shape.num_classes, 0.5);
  model.b = random_normal(rng, shape.num_classes, 1, 0.1);
  if (dual) {
    model.w_star = random_normal(rng, shape.feature_dim, shape.num_classes, 0.5);
    model.b_star = random_normal(rng, shape.num_classes, 1, 0.1);
    model.beta_prime = 0.3;
  }
  model.lambda = 0.05;
  model.lambda_star = 0.07;

  Batch batch;
  batch.source_inputs = random_normal(rng, shape.input_dim, 9);
  batch.target_inputs = random_normal(rng, shape.input_dim, 7);
  for (int n = 0; n < 9; ++n) batch.source_labels.push_back(n % 3);
  for (int n = 0; n < 7; ++n) batch.target_labels.push_back(n % 3);

  // Put the tau constraint in play for roughly half of the features.
  Matrix raw = stream_forward(model.source, batch.source_inputs, 1e300).raw;
  std::vector<double> norms;
  for (Eigen::Index n = 0; n < raw.cols(); ++n) norms.push_back(raw.col(n).squaredNorm());
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(norms.size() / 2), norms.end());
  model.tau = norms[norms.size() / 2] * 1.01;

  AlignmentConfig cfg = AlignmentConfig::make(3, 3, true);
  cfg.sigma1 = 0.4;
  cfg.sigma2 = 0.6;
  cfg.alpha1 = 0.3;
  cfg.alpha2 = 0.2;
  for (auto& z : cfg.zeta) z = (Vector::Ones(3) + random_normal(rng, 3, 1, 0.2)).cwiseAbs();
  cfg.zeta_bar = (Vector::Ones(3) + random_normal(rng, 3, 1, 0.2)).cwiseAbs();

  const ObjectiveResult res = full_objective(model, batch, cfg);
  auto f = [&] { return full_objective(model, batch, cfg).loss.total; };
  double err = 0.0;
  err = std::max(err, block_error(f, model.w, res.grads.w, h));
  err = std::max(err, block_error(f, model.b, res.grads.b, h));
  if (dual) {
    err = std::max(err, block_error(f, model.w_star, res.grads.w_star, h));
    err = std::max(err, block_error(f, model.b_star, res.grads.b_star, h));
  }
  for (auto [params, grads] : {std::pair{&model.source, &res.grads.source}, std::pair{&model.target, &res.grads.target}}) {
    err = std::max(err, block_error(f, params->w1, grads->w1, h));
    err = std::max(err, block_error(f, params->b1, grads->b1, h));
    err = std::max(err, block_error(f, params->w2, grads->w2, h));
    err = std::max(err, block_error(f, params->b2, grads->b2, h));
  }
  for (std::size_t k = 0; k < cfg.zeta.size(); ++k) err = std::max(err, block_error(f, cfg.zeta[k], res.grads.weights.zeta[k], h));
  err = std::max(err, block_error(f, cfg.zeta_bar, res.grads.weights.zeta_bar, h));
  tracker.add("full_objective", err);
}

}  // namespace

Matrix numerical_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix probe = x;
  const Vector flat = fd_in_place([&] { return f(probe); }, probe.data(), probe.size(), h);
  return Eigen::Map<const Matrix>(flat.data(), x.rows(), x.cols());
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: size mismatch");
  if (analytic.size() == 0) return 0.0;
  const Eigen::Map<const Vector> a(analytic.data(), analytic.size());
  const Eigen::Map<const Vector> n(numeric.data(), numeric.size());
  const double scale = std::max(a.lpNorm<Eigen::Infinity>(), n.lpNorm<Eigen::Infinity>());
  if (scale == 0.0) return 0.0;
  return (a - n).lpNorm<Eigen::Infinity>() / scale;
}

std::vector<GradBlockReport> run_gradcheck(const GradCheckOptions& options) {
  if (options.instances < 1) throw ArgumentError("gradcheck needs at least one instance");
  for (int r : options.orders) {
    if (r < 2) throw ArgumentError("gradcheck orders must be >= 2");
  }
  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  Tracker tracker;

  for (int i = 0; i < options.instances; ++i) {
    const int dim = uniform_int(rng, 2, 6);
    Matrix src = random_normal(rng, dim, uniform_int(rng, 3, 8));
    Matrix tgt = random_normal(rng, dim, uniform_int(rng, 3, 8)) * 1.4;

    check_feature_pair(tracker, "cov_explicit", src, tgt, grad_explicit_cov_align(src, tgt, 2),
                       [](const Matrix& s, const Matrix& t) {
                         return tensor_frob_dist_sq(compute_scatter(s, 2), compute_scatter(t, 2));
                       },
                       h);
    check_feature_pair(tracker, "mean", src, tgt, grad_mean_align(src, tgt),
                       [](const Matrix& s, const Matrix& t) { return (compute_mean(s) - compute_mean(t)).squaredNorm(); },
                       h);
    for (int r : options.orders) {
      check_feature_pair(tracker, "kernelized_r" + std::to_string(r), src, tgt, grad_kernelized_align(src, tgt, r),
                         [r](const Matrix& s, const Matrix& t) { return kernel_frob_dist_sq(s, t, r); }, h);
    }

    // Weights of the multi-order loss.
    {
      const int classes = uniform_int(rng, 2, 4);
      const int max_order = options.orders.empty() ? 2 : *std::max_element(options.orders.begin(), options.orders.end());
      AlignmentConfig cfg = AlignmentConfig::make(classes, max_order, true);
      cfg.sigma1 = 0.7;
      cfg.sigma2 = 0.9;
      cfg.alpha1 = 0.4;
      cfg.alpha2 = 0.3;
      for (auto& z : cfg.zeta) z = (Vector::Ones(classes) + random_normal(rng, classes, 1, 0.3)).cwiseAbs();
      cfg.zeta_bar = (Vector::Ones(classes) + random_normal(rng, classes, 1, 0.3)).cwiseAbs();
      const auto pairs = random_pairs(rng, classes, dim);
      const AlignmentTerms terms = alignment_loss_weighted(pairs, cfg);
      const WeightGrads g = grad_weights(cfg, terms.scatter_dist, terms.mean_dist);
      auto f = [&] {
        const AlignmentTerms t = alignment_loss_weighted(pairs, cfg);
        return t.scatter_align + t.mean_align + t.weight_reg;
      };
      double err = 0.0;
      for (std::size_t k = 0; k < cfg.zeta.size(); ++k) err = std::max(err, block_error(f, cfg.zeta[k], g.zeta[k], h));
      tracker.add("zeta", err);
      tracker.add("zeta_bar", block_error(f, cfg.zeta_bar, g.zeta_bar, h));
    }

    // Softmax classifier.
    {
      const int classes = uniform_int(rng, 2, 5);
      const int batch = uniform_int(rng, 1, 8);
      Matrix w = random_normal(rng, dim, classes);
      Vector b = random_normal(rng, classes, 1);
      Matrix feats = random_normal(rng, dim, batch);
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (auto& y : labels) y = uniform_int(rng, 0, classes - 1);
      const SoftmaxResult sm = softmax_loss_and_grad(w, b, feats, labels);
      auto f = [&] { return softmax_loss_and_grad(w, b, feats, labels).loss; };
      double err = block_error(f, w, sm.grad_w, h);
      err = std::max(err, block_error(f, b, sm.grad_b, h));
      err = std::max(err, block_error(f, feats, sm.grad_features, h));
      tracker.add("softmax", err);
    }

    // Stream back-propagation with the tau ball active on some columns.
    {
      StreamParams params{random_normal(rng, 6, 3), random_normal(rng, 6, 1, 0.2), random_normal(rng, dim, 6),
                          random_normal(rng, dim, 1, 0.2)};
      Matrix inputs = random_normal(rng, 3, 7);
      const Matrix upstream = random_normal(rng, dim, 7);
      const Matrix raw = stream_forward(params, inputs, 1e300).raw;
      double tau = 0.0;
      for (Eigen::Index n = 0; n < raw.cols(); ++n) tau += raw.col(n).squaredNorm();
      tau /= static_cast<double>(raw.cols());
      const StreamParams g = stream_backward(params, stream_forward(params, inputs, tau), upstream, tau);
      auto f = [&] { return (stream_forward(params, inputs, tau).features.array() * upstream.array()).sum(); };
      double err = block_error(f, params.w1, g.w1, h);
      err = std::max(err, block_error(f, params.b1, g.b1, h));
      err = std::max(err, block_error(f, params.w2, g.w2, h));
      err = std::max(err, block_error(f, params.b2, g.b2, h));
      tracker.add("stream_projection", err);
    }

    check_objective(tracker, rng, i, h);
  }
  return tracker.rows;
}

EquivReport run_equivalence(const EquivOptions& options) {
  if (options.trials < 1) throw ArgumentError("--trials must be >= 1");
  if (options.dims.empty() || options.orders.empty()) throw ArgumentError("dims and orders must be non-empty");
  if (options.min_samples < 1 || options.max_samples < options.min_samples) {
    throw ArgumentError("sample range must satisfy 1 <= min <= max");
  }
  for (int d : options.dims) {
    for (int r : options.orders) {
      if (d < 1 || r < 1) throw ArgumentError("dims and orders must be positive");
      const std::uint64_t count = unique_coeff_count(d, r);
      if (count > options.coeff_cap) {
        throw CapacityError("explicit tensor with d=" + std::to_string(d) + ", r=" + std::to_string(r) + " needs " +
                            std::to_string(count) + " coefficients, cap is " + std::to_string(options.coeff_cap));
      }
    }
  }
  std::mt19937_64 rng(options.seed);
  EquivReport report;
  for (int t = 0; t < options.trials; ++t) {
    const int d = options.dims[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(options.dims.size()) - 1))];
    const int r =
        options.orders[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(options.orders.size()) - 1))];
    const Matrix src = random_normal(rng, d, uniform_int(rng, options.min_samples, options.max_samples));
    const Matrix tgt = random_normal(rng, d, uniform_int(rng, options.min_samples, options.max_samples)) * 1.5;
    const KernelBlocks blocks = build_kernel_blocks(src, tgt, r);
    const double kernelized = kernel_frob_dist_sq(blocks, r);
    const double explicit_dist =
        tensor_frob_dist_sq(compute_scatter(src, r, options.coeff_cap), compute_scatter(tgt, r, options.coeff_cap));
    // Both routes subtract sums of magnitude sum |K|^r / (N N'); when those
    // cancel exactly (two samples at odd order give X = X* = 0) the results are
    // pure rounding, so deviations are measured against that magnitude.
    const double n = static_cast<double>(src.cols());
    const double n_star = static_cast<double>(tgt.cols());
    const double magnitude = elementwise_power(blocks.k_ss.cwiseAbs(), r).sum() / (n * n) +
                             elementwise_power(blocks.k_tt.cwiseAbs(), r).sum() / (n_star * n_star) +
                             2.0 * elementwise_power(blocks.k_st.cwiseAbs(), r).sum() / (n * n_star);
    const double scale = std::max({std::abs(kernelized), std::abs(explicit_dist), magnitude});
    const double dev = scale == 0.0 ? 0.0 : std::abs(kernelized - explicit_dist) / scale;
    report.max_rel_dev = std::max(report.max_rel_dev, dev);
    ++report.trials;
  }
  return report;
}

std::vector<BenchRow> run_bench(const BenchOptions& options) {
  if (options.repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  if (options.n_source < 1 || options.n_target < 1) throw ArgumentError("sample counts must be >= 1");
  std::mt19937_64 rng(options.seed);
  std::vector<BenchRow> rows;

  auto median_ns = [&](const std::function<void()>& work) {
    work();
    std::vector<std::int64_t> samples;
    for (int i = 0; i < options.repetitions; ++i) {
      const auto start = std::chrono::steady_clock::now();
      work();
      const auto stop = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
  };

  for (int d : options.dims) {
    const Matrix src = random_normal(rng, d, options.n_source);
    const Matrix tgt = random_normal(rng, d, options.n_target);
    for (int r : options.orders) {
      volatile double sink = 0.0;
      BenchRow explicit_row{CostMode::Explicit, d, options.n_source, options.n_target, r, std::nullopt,
                            cost_model(d, options.n_source, options.n_target, r, CostMode::Explicit)};
      if (unique_coeff_count(d, r) <= options.coeff_cap) {
        explicit_row.wall_ns = median_ns([&] {
          sink = tensor_frob_dist_sq(compute_scatter(src, r, options.coeff_cap),
                                     compute_scatter(tgt, r, options.coeff_cap));
        });
      }
      BenchRow kernel_row{CostMode::Kernelized, d, options.n_source, options.n_target, r, std::nullopt,
                          cost_model(d, options.n_source, options.n_target, r, CostMode::Kernelized)};
      kernel_row.wall_ns = median_ns([&] { sink = kernel_frob_dist_sq(src, tgt, r); });
      (void)sink;
      rows.push_back(explicit_row);
      rows.push_back(kernel_row);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "mode,d,N,N_star,r,wall_ns,predicted_ops\n";
  for (const auto& row : rows) {
    out << (row.mode == CostMode::Explicit ? "explicit" : "kernelized") << ',' << row.dim << ',' << row.n_source << ','
        << row.n_target << ',' << row.order << ',';
    if (row.wall_ns) {
      out << *row.wall_ns;
    } else {
      out << "infeasible";
    }
    out << ',' << row.predicted_ops << '\n';
  }
  return out.str();
}

}  // namespace sohot
