#include "sohot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

struct Velocity {
  StreamParams source;
  StreamParams target;
  Matrix w;
  Vector b;
  Matrix w_star;
  Vector b_star;
  std::vector<Vector> zeta;
  Vector zeta_bar;
};

StreamParams zeros_like(const StreamParams& p) {
  StreamParams z = p;
  z.set_zero();
  return z;
}

Velocity make_velocity(const TwoStreamModel& model, const AlignmentConfig& align) {
  Velocity v;
  v.source = zeros_like(model.source);
  v.target = zeros_like(model.target);
  v.w = Matrix::Zero(model.w.rows(), model.w.cols());
  v.b = Vector::Zero(model.b.size());
  if (model.dual) {
    v.w_star = Matrix::Zero(model.w_star.rows(), model.w_star.cols());
    v.b_star = Vector::Zero(model.b_star.size());
  }
  for (const auto& z : align.zeta) v.zeta.push_back(Vector::Zero(z.size()));
  v.zeta_bar = Vector::Zero(align.zeta_bar.size());
  return v;
}

template <typename Param>
void momentum_step(Param& param, Param& velocity, const Param& grad, double lr, double momentum) {
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

void update_stream(StreamParams& p, StreamParams& v, const StreamParams& g, const TrainConfig& cfg) {
  if (!cfg.freeze_first_layer) {
    momentum_step(p.w1, v.w1, g.w1, cfg.learning_rate, cfg.momentum);
    momentum_step(p.b1, v.b1, g.b1, cfg.learning_rate, cfg.momentum);
  }
  momentum_step(p.w2, v.w2, g.w2, cfg.learning_rate, cfg.momentum);
  momentum_step(p.b2, v.b2, g.b2, cfg.learning_rate, cfg.momentum);
}

void apply_update(TwoStreamModel& model, AlignmentConfig& align, Velocity& v, const ModelGrads& g,
                  const TrainConfig& cfg) {
  update_stream(model.source, v.source, g.source, cfg);
  update_stream(model.target, v.target, g.target, cfg);
  momentum_step(model.w, v.w, g.w, cfg.learning_rate, cfg.momentum);
  momentum_step(model.b, v.b, g.b, cfg.learning_rate, cfg.momentum);
  if (model.dual) {
    momentum_step(model.w_star, v.w_star, g.w_star, cfg.learning_rate, cfg.momentum);
    momentum_step(model.b_star, v.b_star, g.b_star, cfg.learning_rate, cfg.momentum);
  }
  if (align.weighted && !cfg.pooled_baseline) {
    for (std::size_t k = 0; k < align.zeta.size(); ++k) {
      momentum_step(align.zeta[k], v.zeta[k], g.weights.zeta[k], cfg.learning_rate, cfg.momentum);
      align.zeta[k] = align.zeta[k].cwiseMax(0.0);
    }
    momentum_step(align.zeta_bar, v.zeta_bar, g.weights.zeta_bar, cfg.learning_rate, cfg.momentum);
    align.zeta_bar = align.zeta_bar.cwiseMax(0.0);
  }
}

// Per-class shuffles interleaved round-robin, so any window of C consecutive
// entries covers every class that still has samples left.
std::vector<Eigen::Index> stratified_order(const std::vector<int>& labels, int num_classes, std::mt19937_64& rng) {
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t n = 0; n < labels.size(); ++n) by_class[labels[n]].push_back(static_cast<Eigen::Index>(n));
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);
  std::vector<Eigen::Index> order;
  order.reserve(labels.size());
  for (std::size_t round = 0; order.size() < labels.size(); ++round) {
    for (const auto& members : by_class) {
      if (round < members.size()) order.push_back(members[round]);
    }
  }
  return order;
}

void take(const LabeledSet& set, const std::vector<Eigen::Index>& cols, Matrix& inputs, std::vector<int>& labels) {
  inputs.resize(set.dim(), static_cast<Eigen::Index>(cols.size()));
  labels.resize(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    inputs.col(static_cast<Eigen::Index>(i)) = set.inputs.col(cols[i]);
    labels[i] = set.labels[static_cast<std::size_t>(cols[i])];
  }
}

std::vector<Batch> epoch_batches(const LabeledSet& source, const LabeledSet& target, const TrainConfig& cfg,
                                 int num_classes, std::mt19937_64& rng) {
  std::vector<Batch> batches;
  if (cfg.stat_scope == StatScope::FullClass) {
    batches.push_back({source.inputs, source.labels, target.inputs, target.labels});
    return batches;
  }
  const auto src_order = stratified_order(source.labels, num_classes, rng);
  const auto tgt_order = stratified_order(target.labels, num_classes, rng);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (src_order.size() + bs - 1) / bs;
  const std::size_t tgt_bs = std::min(bs, tgt_order.size());
  for (std::size_t s = 0; s < steps; ++s) {
    Batch batch;
    const std::size_t lo = s * bs;
    const std::size_t hi = std::min(lo + bs, src_order.size());
    take(source, std::vector<Eigen::Index>(src_order.begin() + static_cast<std::ptrdiff_t>(lo),
                                           src_order.begin() + static_cast<std::ptrdiff_t>(hi)),
         batch.source_inputs, batch.source_labels);
    std::vector<Eigen::Index> tgt_cols(tgt_bs);
    for (std::size_t i = 0; i < tgt_bs; ++i) tgt_cols[i] = tgt_order[(s * tgt_bs + i) % tgt_order.size()];
    take(target, tgt_cols, batch.target_inputs, batch.target_labels);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (eval_every < 1) throw ArgumentError("eval_every must be >= 1");
  align.validate();
}

ObjectiveResult pooled_softmax_objective(const TwoStreamModel& model, const Batch& batch) {
  model.validate();
  if (model.dual) throw ArgumentError("the pooled baseline uses one shared classifier");
  const StreamActivations src = stream_forward(model.source, batch.source_inputs, model.tau);
  const StreamActivations tgt = stream_forward(model.target, batch.target_inputs, model.tau);
  const Eigen::Index n_src = src.features.cols();
  const Eigen::Index n_tgt = tgt.features.cols();

  Matrix pooled(src.features.rows(), n_src + n_tgt);
  pooled << src.features, tgt.features;
  std::vector<int> labels = batch.source_labels;
  labels.insert(labels.end(), batch.target_labels.begin(), batch.target_labels.end());
  const SoftmaxResult sm = softmax_loss_and_grad(model.w, model.b, pooled, labels);

  ObjectiveResult out;
  out.loss.classifier = sm.loss;
  out.loss.l2_reg = model.lambda * model.w.squaredNorm();
  out.loss.finalize();
  out.grads.w = sm.grad_w + 2.0 * model.lambda * model.w;
  out.grads.b = sm.grad_b;
  out.grads.source = stream_backward(model.source, src, sm.grad_features.leftCols(n_src), model.tau);
  out.grads.target = stream_backward(model.target, tgt, sm.grad_features.rightCols(n_tgt), model.tau);
  return out;
}

std::vector<int> predict(const TwoStreamModel& model, const Matrix& inputs, Domain domain) {
  const Matrix features = forward_features(model, inputs, domain);
  Matrix logits = model.classifier_w(domain).transpose() * features;
  logits.colwise() += model.classifier_b(domain);
  std::vector<int> out(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.rows(); ++c) {
      if (logits(c, n) > logits(best, n)) best = c;
    }
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const TwoStreamModel& model, const LabeledSet& target_test) {
  if (target_test.size() == 0) return 0.0;
  const auto predicted = predict(model, target_test.inputs, Domain::Target);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < predicted.size(); ++n) hits += predicted[n] == target_test.labels[n] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

TrainResult train(TwoStreamModel model, const LabeledSet& source, const LabeledSet& target, const TrainConfig& config,
                  const LabeledSet* eval_set, const StepObserver& observer) {
  config.validate();
  model.validate();
  if (source.size() == 0 || target.size() == 0) throw ArgumentError("training needs source and target samples");
  const int num_classes = model.shape.num_classes;
  if (config.align.num_classes != num_classes) throw ArgumentError("alignment config and model disagree on C");
  for (const LabeledSet* set : {&source, &target}) {
    for (int y : set->labels) {
      if (y < 0 || y >= num_classes) throw ArgumentError("training label outside the model's class range");
    }
  }

  TrainResult result;
  result.align = config.align;
  if (!result.align.weighted) result.align.reset_weights();
  Velocity velocity = make_velocity(model, result.align);
  std::mt19937_64 rng(config.seed);
  const LabeledSet& scored = (eval_set != nullptr && eval_set->size() > 0) ? *eval_set : target;
  const Batch full_batch{source.inputs, source.labels, target.inputs, target.labels};

  auto objective = [&](const Batch& batch) {
    return config.pooled_baseline ? pooled_softmax_objective(model, batch)
                                  : full_objective(model, batch, result.align, config.route);
  };

  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const Batch& batch : epoch_batches(source, target, config, num_classes, rng)) {
      const ObjectiveResult obj = objective(batch);
      if (!std::isfinite(obj.loss.total)) throw DivergenceError(epoch, "non-finite training loss");
      apply_update(model, result.align, velocity, obj.grads, config);
      ++step;
      if (observer) observer(step, model, result.align);
    }
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      const ObjectiveResult obj = objective(full_batch);
      if (!std::isfinite(obj.loss.total)) throw DivergenceError(epoch, "non-finite training loss");
      result.log.push_back({epoch, obj.loss, evaluate(model, scored)});
    }
  }
  result.model = std::move(model);
  return result;
}

std::string metrics_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out << "epoch,classifier,scatter_align,mean_align,weight_reg,l2_reg,total,target_acc\n";
  for (const auto& rec : log) {
    out << rec.epoch << ',' << format_double(rec.loss.classifier) << ',' << format_double(rec.loss.scatter_align)
        << ',' << format_double(rec.loss.mean_align) << ',' << format_double(rec.loss.weight_reg) << ','
        << format_double(rec.loss.l2_reg) << ',' << format_double(rec.loss.total) << ','
        << format_double(rec.target_acc) << '\n';
  }
  return out.str();
}

}  // namespace sohot
