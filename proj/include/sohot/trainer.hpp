#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sohot/data.hpp"
#include "sohot/objective.hpp"

namespace sohot {

enum class StatScope {
  FullClass,  ///< one full-batch step per epoch over the whole training split
  MiniBatch,  ///< class-balanced minibatches; class statistics per batch
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 30;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  AlignmentConfig align;
  StatScope stat_scope = StatScope::MiniBatch;
  int eval_every = 1;
  /// Pooled source+target softmax only (the S+T baseline); the alignment
  /// machinery is not invoked at all.
  bool pooled_baseline = false;
  /// Keep the first stream layer at its initial value.
  bool freeze_first_layer = false;
  DistanceRoute route = DistanceRoute::Kernelized;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double target_acc = 0.0;
};

struct TrainResult {
  TwoStreamModel model;
  AlignmentConfig align;  ///< with the learned weights
  std::vector<EpochRecord> log;
};

/// Called after every parameter update with the 1-based global step.
using StepObserver = std::function<void(int step, const TwoStreamModel& model, const AlignmentConfig& align)>;

/// Softmax + lambda ||W||^2 on the pooled batch, with gradients; the S+T
/// reference objective. Requires a shared classifier.
ObjectiveResult pooled_softmax_objective(const TwoStreamModel& model, const Batch& batch);

/// SGD with momentum on the full objective. `eval_set` (target test data)
/// scores each logged epoch; the target training split is used when it is
/// null or empty. Throws DivergenceError on a non-finite loss.
TrainResult train(TwoStreamModel model, const LabeledSet& source, const LabeledSet& target, const TrainConfig& config,
                  const LabeledSet* eval_set = nullptr, const StepObserver& observer = {});

/// Fraction of `target_test` classified correctly through the target stream;
/// ties go to the smaller class id.
double evaluate(const TwoStreamModel& model, const LabeledSet& target_test);

/// Predicted class per column through the given domain's stream.
std::vector<int> predict(const TwoStreamModel& model, const Matrix& inputs, Domain domain);

/// epoch,classifier,scatter_align,mean_align,weight_reg,l2_reg,total,target_acc
std::string metrics_csv(const std::vector<EpochRecord>& log);

}  // namespace sohot
