#pragma once

#include <vector>

#include "sohot/losses.hpp"
#include "sohot/stream.hpp"

namespace sohot {

/// Raw inputs of both domains for one optimisation step.
struct Batch {
  Matrix source_inputs;  ///< input_dim x N
  std::vector<int> source_labels;
  Matrix target_inputs;  ///< input_dim x N*
  std::vector<int> target_labels;
};

struct ModelGrads {
  StreamParams source;
  StreamParams target;
  Matrix w;
  Vector b;
  Matrix w_star;
  Vector b_star;
  WeightGrads weights;  ///< empty unless the alignment is weighted
};

struct ObjectiveResult {
  LossBreakdown loss;
  ModelGrads grads;
  AlignmentTerms terms;
};

/// Classifier loss + L2 terms + alignment over the batch, with gradients for
/// every parameter block. Feature gradients from the classifier and the
/// alignment are summed before back-propagating through the streams.
ObjectiveResult full_objective(const TwoStreamModel& model, const Batch& batch, const AlignmentConfig& cfg,
                               DistanceRoute route = DistanceRoute::Kernelized);

/// Splits the columns of `features` by label into ClassPairs for classes
/// 0..C-1, in ascending class order.
std::vector<ClassPair> group_by_class(const Matrix& source_features, const std::vector<int>& source_labels,
                                      const Matrix& target_features, const std::vector<int>& target_labels,
                                      int num_classes);

}  // namespace sohot
