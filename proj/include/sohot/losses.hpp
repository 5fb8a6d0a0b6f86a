#pragma once

#include <span>
#include <vector>

#include "sohot/kernel_align.hpp"
#include "sohot/tensor_stats.hpp"

namespace sohot {

/// Alignment hyper-parameters and the learnable per-class weights.
///
/// zeta[k] holds the per-class weights for order k + 2, so zeta has
/// max_order - 1 entries. With weighted == false every weight stays at one.
struct AlignmentConfig {
  int num_classes = 0;
  double sigma1 = 1e-8;
  double sigma2 = 1e-5;
  double alpha1 = 1e-2;
  double alpha2 = 1e-2;
  int max_order = 2;
  bool weighted = false;
  std::vector<Vector> zeta;
  Vector zeta_bar;

  static AlignmentConfig make(int num_classes, int max_order = 2, bool weighted = false);

  /// Sets every weight to one, sized for num_classes and max_order.
  void reset_weights();
  /// Throws ArgumentError on inconsistent sizes or non-finite weights.
  void validate() const;
};

struct LossBreakdown {
  double classifier = 0.0;
  double scatter_align = 0.0;
  double mean_align = 0.0;
  double weight_reg = 0.0;
  double l2_reg = 0.0;
  double total = 0.0;

  /// Recomputes total from the parts.
  void finalize() { total = classifier + scatter_align + mean_align + weight_reg + l2_reg; }
};

struct SoftmaxResult {
  double loss = 0.0;
  Matrix grad_w;         ///< d x C
  Vector grad_b;         ///< C
  Matrix grad_features;  ///< d x M
};

/// Mean cross-entropy of softmax(W^T phi + b) over the columns of `features`.
SoftmaxResult softmax_loss_and_grad(const Matrix& w, const Vector& b, const Matrix& features,
                                    std::span<const int> labels);

/// Features of one class in both domains. Either side may be empty.
struct ClassPair {
  int class_id = 0;
  Matrix source;  ///< d x N_c
  Matrix target;  ///< d x N*_c
};

enum class DistanceRoute { Kernelized, Explicit };

/// Value of the alignment term together with the per-class distances it was
/// built from.
struct AlignmentTerms {
  double scatter_align = 0.0;
  double mean_align = 0.0;
  double weight_reg = 0.0;
  Matrix scatter_dist;  ///< (max_order - 1) x C, row k is order k + 2
  Vector mean_dist;     ///< C
  int absent_classes = 0;     ///< classes missing from one side, skipped entirely
  int singleton_classes = 0;  ///< classes with one sample on a side, scatter skipped
};

/// sigma1/C sum_c ||X_c - X*_c||^2 + sigma2/C sum_c ||mu_c - mu*_c||^2 (order 2).
AlignmentTerms alignment_loss_unweighted(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                         DistanceRoute route = DistanceRoute::Kernelized);

/// Multi-order weighted loss over orders 2..r, with zeta/zeta_bar weights and
/// their deviation penalties.
AlignmentTerms alignment_loss_weighted(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                       DistanceRoute route = DistanceRoute::Kernelized);

struct FeatureGrads {
  Matrix source;
  Matrix target;
};

/// Gradient of ||Sigma - Sigma*||_F^2 through the explicit covariances.
/// Only order 2 is supported.
FeatureGrads grad_explicit_cov_align(const Matrix& source, const Matrix& target, int order = 2);

/// Gradient of ||mu - mu*||^2.
FeatureGrads grad_mean_align(const Matrix& source, const Matrix& target);

/// Gradient of the kernelized ||X^(r) - X*^(r)||_F^2 built from the powered
/// Grams K^q, with q = r - 1, including the mean-correction terms.
FeatureGrads grad_kernelized_align(const Matrix& source, const Matrix& target, int order);
FeatureGrads grad_kernelized_align(const Matrix& source, const Matrix& target, const KernelBlocks& blocks,
                                   int order);

struct WeightGrads {
  std::vector<Vector> zeta;
  Vector zeta_bar;
};

/// Derivatives of the weighted loss w.r.t. zeta and zeta_bar.
/// Throws StateError when cfg.weighted is false.
WeightGrads grad_weights(const AlignmentConfig& cfg, const Matrix& scatter_dist, const Vector& mean_dist);

/// Alignment value plus gradients w.r.t. every class's features and, when
/// weighted, the weights. `feature_grads[i]` matches `pairs[i]`.
struct AlignmentResult {
  AlignmentTerms terms;
  std::vector<FeatureGrads> feature_grads;
  WeightGrads weight_grads;
};

/// Dispatches to the unweighted loss when cfg.weighted is false and
/// cfg.max_order == 2, to the weighted form otherwise.
AlignmentResult alignment_loss_and_grad(std::span<const ClassPair> pairs, const AlignmentConfig& cfg,
                                        DistanceRoute route = DistanceRoute::Kernelized);

}  // namespace sohot
