#include "sohot/losses.hpp"

#include <cmath>
#include <string>

#include "sohot/errors.hpp"

namespace sohot {

AlignmentConfig AlignmentConfig::make(int num_classes, int max_order, bool weighted) {
  AlignmentConfig cfg;
  cfg.num_classes = num_classes;
  cfg.max_order = max_order;
  cfg.weighted = weighted;
  cfg.reset_weights();
  return cfg;
}

void AlignmentConfig::reset_weights() {
  zeta.assign(static_cast<std::size_t>(std::max(max_order - 1, 0)), Vector::Ones(num_classes));
  zeta_bar = Vector::Ones(num_classes);
}

void AlignmentConfig::validate() const {
  if (num_classes < 1) throw ArgumentError("alignment config needs at least one class");
  if (max_order < 2) throw ArgumentError("alignment order must be >= 2");
  if (sigma1 < 0 || sigma2 < 0 || alpha1 < 0 || alpha2 < 0) {
    throw ArgumentError("sigma1, sigma2, alpha1, alpha2 must be >= 0");
  }
  if (static_cast<int>(zeta.size()) != max_order - 1 || zeta_bar.size() != num_classes) {
    throw ArgumentError("alignment weights are not sized for the configured classes and order");
  }
  for (const auto& z : zeta) {
    if (z.size() != num_classes || !z.allFinite()) throw ArgumentError("zeta must be finite and sized C");
  }
  if (!zeta_bar.allFinite()) throw ArgumentError("zeta_bar must be finite");
}

SoftmaxResult softmax_loss_and_grad(const Matrix& w, const Vector& b, const Matrix& features,
                                    std::span<const int> labels) {
  const Eigen::Index classes = w.cols();
  const Eigen::Index batch = features.cols();
  if (w.rows() != features.rows() || b.size() != classes) throw ShapeError("softmax: W, b and features disagree");
  if (static_cast<Eigen::Index>(labels.size()) != batch) throw ShapeError("softmax: one label per column required");
  if (batch == 0) throw ArgumentError("softmax: empty batch");
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ArgumentError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }

  Matrix logits = w.transpose() * features;
  logits.colwise() += b;

  SoftmaxResult out;
  Matrix grad_logits(classes, batch);
  double total = 0.0;
  for (Eigen::Index n = 0; n < batch; ++n) {
    Eigen::Index top = 0;
    const double peak = logits.col(n).maxCoeff(&top);
    double rest = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double e = std::exp(logits(c, n) - peak);
      grad_logits(c, n) = e;
      if (c != top) rest += e;
    }
    // -log p_y = peak - z_y + log(1 + sum_{c != top} e^{z_c - peak})
    const double log_norm = std::log1p(rest);
    total += (peak - logits(labels[n], n)) + log_norm;
    grad_logits.col(n) /= (1.0 + rest);
    grad_logits(labels[n], n) -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  grad_logits *= inv_batch;
  out.loss = total * inv_batch;
  out.grad_w = features * grad_logits.transpose();
  out.grad_b = grad_logits.rowwise().sum();
  out.grad_features = w * grad_logits;
  return out;
}

namespace {

struct PairStats {
  bool absent = false;
  bool singleton = false;
  double mean_dist = 0.0;
  std::vector<double> scatter_dist;  // index k is order k + 2
};

PairStats pair_stats(const ClassPair& pair, int max_order, DistanceRoute route) {
  PairStats stats;
  stats.scatter_dist.assign(static_cast<std::size_t>(max_order - 1), 0.0);
  if (pair.source.cols() == 0 || pair.target.cols() == 0) {
    stats.absent = true;
    return stats;
  }
  if (pair.source.rows() != pair.target.rows()) throw ShapeError("class pair dimensions differ");
  stats.mean_dist = (compute_mean(pair.source) - compute_mean(pair.target)).squaredNorm();
  if (pair.source.cols() == 1 || pair.target.cols() == 1) {
    stats.singleton = true;
    return stats;
  }
  if (route == DistanceRoute::Kernelized) {
    const KernelBlocks blocks = build_kernel_blocks(pair.source, pair.target, max_order);
    for (int r = 2; r <= max_order; ++r) stats.scatter_dist[r - 2] = kernel_frob_dist_sq(blocks, r);
  } else {
    for (int r = 2; r <= max_order; ++r) {
      stats.scatter_dist[r - 2] =
          tensor_frob_dist_sq(compute_scatter(pair.source, r), compute_scatter(pair.target, r));
    }
  }
  return stats;
}

void check_class(const ClassPair& pair, const AlignmentConfig& cfg) {
  if (pair.class_id < 0 || pair.class_id >= cfg.num_classes) {
    throw ArgumentError("class id " + std::to_string(pair.class_id) + " outside the configured class range");
  }
}

// Collects distances for every pair, ascending in input order.
AlignmentTerms collect(std::span<const ClassPair> pairs, const AlignmentConfig& cfg, DistanceRoute route,
                       std::vector<PairStats>* per_pair) {
  AlignmentTerms terms;
  terms.scatter_dist = Matrix::Zero(cfg.max_order - 1, cfg.num_classes);
  terms.mean_dist = Vector::Zero(cfg.num_classes);
  for (const auto& pair : pairs) {
    check_class(pair, cfg);
    PairStats stats = pair_stats(pair, cfg.max_order, route);
    if (stats.absent) ++terms.absent_classes;
    if (stats.singleton) ++terms.singleton_classes;
    terms.mean_dist(pair.class_id) = stats.mean_dist;
    for (int k = 0; k < cfg.max_order - 1; ++k) terms.scatter_dist(k, pair.class_id) = stats.scatter_dist[k];
    if (per_pair != nullptr) per_pair->push_back(std::move(stats));
  }
  return terms;
}

double weighted_scatter_prefactor(const AlignmentConfig& cfg) {
  return cfg.sigma1 / (static_cast<double>(cfg.max_order) * cfg.num_classes);
}

void fill_weighted_values(AlignmentTerms& terms, const AlignmentConfig& cfg) {
  const double scatter_pref = weighted_scatter_prefactor(cfg);
  const double mean_pref = cfg.sigma2 / cfg.num_classes;
  double scatter = 0.0;
  for (int k = 0; k < cfg.max_order - 1; ++k) {
    for (int c = 0; c < cfg.num_classes; ++c) scatter += cfg.zeta[k](c) * terms.scatter_dist(k, c);
  }
  double mean = 0.0;
  for (int c = 0; c < cfg.num_classes; ++c) mean += cfg.zeta_bar(c) * terms.mean_dist(c);
  double zeta_dev = 0.0;
  for (const auto& z : cfg.zeta) zeta_dev += (z.array() - 1.0).square().sum();
  terms.scatter_align = scatter_pref * scatter;
  terms.mean_align = mean_pref * mean;
  terms.weight_reg = cfg.alpha1 / cfg.max_order * zeta_dev + cfg.alpha2 * (cfg.zeta_bar.array() - 1.0).square().sum();
}

void fill_unweighted_values(AlignmentTerms& terms, const AlignmentConfig& cfg) {
  terms.scatter_align = cfg.sigma1 / cfg.num_classes * terms.scatter_dist.row(0).sum();
  terms.mean_align = cfg.sigma2 / cfg.num_classes * terms.mean_dist.sum();
  terms.weight_reg = 0.0;
}

}  // namespace

AlignmentTerms alignment_loss_unweighted(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                         DistanceRoute route) {
  cfg.validate();
  if (cfg.max_order != 2) throw ArgumentError("the unweighted alignment loss is defined for order 2");
  AlignmentTerms terms = collect(pairs, cfg, route, nullptr);
  fill_unweighted_values(terms, cfg);
  return terms;
}

AlignmentTerms alignment_loss_weighted(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                       DistanceRoute route) {
  cfg.validate();
  AlignmentTerms terms = collect(pairs, cfg, route, nullptr);
  fill_weighted_values(terms, cfg);
  return terms;
}

FeatureGrads grad_explicit_cov_align(const Matrix& source, const Matrix& target, int order) {
  if (order != 2) throw ArgumentError("explicit covariance gradient is defined for order 2 only");
  if (source.rows() != target.rows()) throw ShapeError("source and target dimensions differ");
  const double n = static_cast<double>(source.cols());
  const double m = static_cast<double>(target.cols());
  const Matrix xs = centre_columns(source);
  const Matrix ys = centre_columns(target);
  const Matrix diff = xs * xs.transpose() / n - ys * ys.transpose() / m;
  return {(4.0 / n) * diff * xs, (-4.0 / m) * diff * ys};
}

FeatureGrads grad_mean_align(const Matrix& source, const Matrix& target) {
  if (source.rows() != target.rows()) throw ShapeError("source and target dimensions differ");
  const double n = static_cast<double>(source.cols());
  const double m = static_cast<double>(target.cols());
  const Vector diff = compute_mean(source) - compute_mean(target);
  FeatureGrads out;
  out.source = (2.0 / n * diff).replicate(1, source.cols());
  out.target = (-2.0 / m * diff).replicate(1, target.cols());
  return out;
}

FeatureGrads grad_kernelized_align(const Matrix& source, const Matrix& target, int order) {
  return grad_kernelized_align(source, target, build_kernel_blocks(source, target, order), order);
}

FeatureGrads grad_kernelized_align(const Matrix& source, const Matrix& target, const KernelBlocks& blocks,
                                   int order) {
  if (order < 2) throw ArgumentError("kernelized gradient needs order >= 2");
  if (source.rows() != target.rows()) throw ShapeError("source and target dimensions differ");
  if (blocks.n_source() != source.cols() || blocks.n_target() != target.cols()) {
    throw ShapeError("kernel blocks do not match the feature matrices");
  }
  const Eigen::Index n_src = source.cols();
  const Eigen::Index n_tgt = target.cols();
  const double n = static_cast<double>(n_src);
  const double m = static_cast<double>(n_tgt);
  const double r = static_cast<double>(order);
  const int q = order - 1;

  const Vector mu = compute_mean(source);
  const Vector mu_t = compute_mean(target);
  const Matrix k_ss = elementwise_power(blocks.k_ss, q);
  const Matrix k_tt = elementwise_power(blocks.k_tt, q);
  const Matrix k_st = elementwise_power(blocks.k_st, q);

  // Source side.
  //   (2r/N^2) [Phi (K^q - 1/N (K^q 1) 1^T) + mu (1/N 1^T K^q 1 - 1^T K^q)]
  // - (2r/NN*) [Phi* (Kst^qT - 1/N (Kst^qT 1) 1^T) - mu* (1^T Kst^qT - 1/N 1^T Kst^qT 1)]
  Matrix self_src = source * k_ss;
  {
    const Vector row_mean = self_src.rowwise().sum() / n;
    self_src.colwise() -= row_mean;
    const Eigen::RowVectorXd col_sum = k_ss.colwise().sum();
    const double total = col_sum.sum();
    self_src.noalias() += mu * (Eigen::RowVectorXd::Constant(n_src, total / n) - col_sum);
  }
  Matrix cross_src = target * k_st.transpose();
  {
    const Vector row_mean = cross_src.rowwise().sum() / n;
    cross_src.colwise() -= row_mean;
    const Eigen::RowVectorXd row_sum = k_st.rowwise().sum().transpose();
    const double total = row_sum.sum();
    cross_src.noalias() -= mu_t * (row_sum - Eigen::RowVectorXd::Constant(n_src, total / n));
  }

  // Target side, mirrored with K_tt and K_st.
  Matrix self_tgt = target * k_tt;
  {
    const Vector row_mean = self_tgt.rowwise().sum() / m;
    self_tgt.colwise() -= row_mean;
    const Eigen::RowVectorXd col_sum = k_tt.colwise().sum();
    const double total = col_sum.sum();
    self_tgt.noalias() += mu_t * (Eigen::RowVectorXd::Constant(n_tgt, total / m) - col_sum);
  }
  Matrix cross_tgt = source * k_st;
  {
    const Vector row_mean = cross_tgt.rowwise().sum() / m;
    cross_tgt.colwise() -= row_mean;
    const Eigen::RowVectorXd col_sum = k_st.colwise().sum();
    const double total = col_sum.sum();
    cross_tgt.noalias() -= mu * (col_sum - Eigen::RowVectorXd::Constant(n_tgt, total / m));
  }

  FeatureGrads out;
  out.source = (2.0 * r / (n * n)) * self_src - (2.0 * r / (n * m)) * cross_src;
  out.target = (2.0 * r / (m * m)) * self_tgt - (2.0 * r / (n * m)) * cross_tgt;
  return out;
}

WeightGrads grad_weights(const AlignmentConfig& cfg, const Matrix& scatter_dist, const Vector& mean_dist) {
  if (!cfg.weighted) throw StateError("weight gradients requested for an unweighted alignment config");
  cfg.validate();
  if (scatter_dist.rows() != cfg.max_order - 1 || scatter_dist.cols() != cfg.num_classes ||
      mean_dist.size() != cfg.num_classes) {
    throw ShapeError("distance tables are not sized (max_order - 1) x C and C");
  }
  const double scatter_pref = weighted_scatter_prefactor(cfg);
  const double zeta_pref = 2.0 * cfg.alpha1 / cfg.max_order;
  WeightGrads out;
  for (int k = 0; k < cfg.max_order - 1; ++k) {
    out.zeta.push_back(scatter_pref * scatter_dist.row(k).transpose() +
                       zeta_pref * (cfg.zeta[k].array() - 1.0).matrix());
  }
  out.zeta_bar = cfg.sigma2 / cfg.num_classes * mean_dist + 2.0 * cfg.alpha2 * (cfg.zeta_bar.array() - 1.0).matrix();
  return out;
}

AlignmentResult alignment_loss_and_grad(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                        DistanceRoute route) {
  cfg.validate();
  const bool eq3_form = !cfg.weighted && cfg.max_order == 2;

  AlignmentResult out;
  std::vector<PairStats> stats;
  out.terms = collect(pairs, cfg, route, &stats);
  if (eq3_form) {
    fill_unweighted_values(out.terms, cfg);
  } else {
    fill_weighted_values(out.terms, cfg);
  }

  const double mean_pref = cfg.sigma2 / cfg.num_classes;
  out.feature_grads.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const ClassPair& pair = pairs[i];
    FeatureGrads grads{Matrix::Zero(pair.source.rows(), pair.source.cols()),
                       Matrix::Zero(pair.target.rows(), pair.target.cols())};
    if (stats[i].absent) {
      out.feature_grads.push_back(std::move(grads));
      continue;
    }
    const int c = pair.class_id;
    const double mean_coef = mean_pref * (eq3_form ? 1.0 : cfg.zeta_bar(c));
    if (mean_coef != 0.0) {
      const FeatureGrads g = grad_mean_align(pair.source, pair.target);
      grads.source += mean_coef * g.source;
      grads.target += mean_coef * g.target;
    }
    if (!stats[i].singleton && cfg.sigma1 != 0.0) {
      const KernelBlocks blocks = build_kernel_blocks(pair.source, pair.target, cfg.max_order);
      for (int r = 2; r <= cfg.max_order; ++r) {
        const double coef =
            eq3_form ? cfg.sigma1 / cfg.num_classes : weighted_scatter_prefactor(cfg) * cfg.zeta[r - 2](c);
        if (coef == 0.0) continue;
        const FeatureGrads g = (route == DistanceRoute::Explicit && r == 2)
                                   ? grad_explicit_cov_align(pair.source, pair.target, 2)
                                   : grad_kernelized_align(pair.source, pair.target, blocks, r);
        grads.source += coef * g.source;
        grads.target += coef * g.target;
      }
    }
    out.feature_grads.push_back(std::move(grads));
  }
  if (cfg.weighted) out.weight_grads = grad_weights(cfg, out.terms.scatter_dist, out.terms.mean_dist);
  return out;
}

}  // namespace sohot
