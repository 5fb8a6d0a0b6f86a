#include "sohot/objective.hpp"

#include <string>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

std::vector<std::vector<Eigen::Index>> columns_by_class(const std::vector<int>& labels, int num_classes) {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= num_classes) {
      throw ArgumentError("label " + std::to_string(labels[n]) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[static_cast<std::size_t>(labels[n])].push_back(static_cast<Eigen::Index>(n));
  }
  return out;
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  return out;
}

}  // namespace

std::vector<ClassPair> group_by_class(const Matrix& source_features, const std::vector<int>& source_labels,
                                      const Matrix& target_features, const std::vector<int>& target_labels,
                                      int num_classes) {
  const auto src_cols = columns_by_class(source_labels, num_classes);
  const auto tgt_cols = columns_by_class(target_labels, num_classes);
  std::vector<ClassPair> pairs;
  pairs.reserve(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    pairs.push_back({c, gather(source_features, src_cols[c]), gather(target_features, tgt_cols[c])});
  }
  return pairs;
}

ObjectiveResult full_objective(const TwoStreamModel& model, const Batch& batch, const AlignmentConfig& cfg,
                               DistanceRoute route) {
  model.validate();
  if (batch.source_inputs.cols() == 0 || batch.target_inputs.cols() == 0) {
    throw ArgumentError("objective batch must contain both domains");
  }
  if (cfg.num_classes != model.shape.num_classes) throw ArgumentError("alignment config and model disagree on C");

  const StreamActivations src = stream_forward(model.source, batch.source_inputs, model.tau);
  const StreamActivations tgt = stream_forward(model.target, batch.target_inputs, model.tau);
  const Eigen::Index n_src = src.features.cols();
  const Eigen::Index n_tgt = tgt.features.cols();

  ObjectiveResult out;
  Matrix grad_src_features;
  Matrix grad_tgt_features;

  if (!model.dual) {
    Matrix pooled(src.features.rows(), n_src + n_tgt);
    pooled << src.features, tgt.features;
    std::vector<int> labels = batch.source_labels;
    labels.insert(labels.end(), batch.target_labels.begin(), batch.target_labels.end());
    const SoftmaxResult sm = softmax_loss_and_grad(model.w, model.b, pooled, labels);
    out.loss.classifier = sm.loss;
    out.loss.l2_reg = model.lambda * model.w.squaredNorm();
    out.grads.w = sm.grad_w + 2.0 * model.lambda * model.w;
    out.grads.b = sm.grad_b;
    grad_src_features = sm.grad_features.leftCols(n_src);
    grad_tgt_features = sm.grad_features.rightCols(n_tgt);
  } else {
    const SoftmaxResult sm_src = softmax_loss_and_grad(model.w, model.b, src.features, batch.source_labels);
    const SoftmaxResult sm_tgt = softmax_loss_and_grad(model.w_star, model.b_star, tgt.features, batch.target_labels);
    const Matrix coupling = model.w - model.w_star;
    out.loss.classifier = sm_src.loss + sm_tgt.loss;
    out.loss.l2_reg = model.lambda * model.w.squaredNorm() + model.lambda_star * model.w_star.squaredNorm() +
                      model.beta_prime * coupling.squaredNorm();
    out.grads.w = sm_src.grad_w + 2.0 * model.lambda * model.w + 2.0 * model.beta_prime * coupling;
    out.grads.b = sm_src.grad_b;
    out.grads.w_star = sm_tgt.grad_w + 2.0 * model.lambda_star * model.w_star - 2.0 * model.beta_prime * coupling;
    out.grads.b_star = sm_tgt.grad_b;
    grad_src_features = sm_src.grad_features;
    grad_tgt_features = sm_tgt.grad_features;
  }

  const auto src_cols = columns_by_class(batch.source_labels, cfg.num_classes);
  const auto tgt_cols = columns_by_class(batch.target_labels, cfg.num_classes);
  std::vector<ClassPair> pairs;
  pairs.reserve(static_cast<std::size_t>(cfg.num_classes));
  for (int c = 0; c < cfg.num_classes; ++c) {
    pairs.push_back({c, gather(src.features, src_cols[c]), gather(tgt.features, tgt_cols[c])});
  }
  AlignmentResult align = alignment_loss_and_grad(pairs, cfg, route);
  for (int c = 0; c < cfg.num_classes; ++c) {
    const FeatureGrads& g = align.feature_grads[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < src_cols[c].size(); ++i) {
      grad_src_features.col(src_cols[c][i]) += g.source.col(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < tgt_cols[c].size(); ++i) {
      grad_tgt_features.col(tgt_cols[c][i]) += g.target.col(static_cast<Eigen::Index>(i));
    }
  }

  out.loss.scatter_align = align.terms.scatter_align;
  out.loss.mean_align = align.terms.mean_align;
  out.loss.weight_reg = align.terms.weight_reg;
  out.loss.finalize();
  out.terms = std::move(align.terms);
  out.grads.weights = std::move(align.weight_grads);
  out.grads.source = stream_backward(model.source, src, grad_src_features, model.tau);
  out.grads.target = stream_backward(model.target, tgt, grad_tgt_features, model.tau);
  return out;
}

}  // namespace sohot
