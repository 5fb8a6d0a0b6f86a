#pragma once

#include <cstdint>

#include "sohot/tensor_stats.hpp"

namespace sohot {

/// Two-layer feature map: phi = P_tau(W2 tanh(W1 x + b1) + b2), where P_tau
/// rescales any column with ||z||^2 > tau back onto the ball.
/// Gradients use the same type.
struct StreamParams {
  Matrix w1;  ///< hidden x input
  Vector b1;
  Matrix w2;  ///< d x hidden
  Vector b2;

  bool same_shape(const StreamParams& other) const;
  void set_zero();
};

struct StreamActivations {
  Matrix inputs;
  Matrix hidden;    ///< tanh output
  Matrix raw;       ///< pre-projection features
  Matrix features;  ///< projected features
};

Matrix project_to_ball(const Matrix& raw, double tau);

/// Vector-Jacobian product of project_to_ball: on active columns the Jacobian
/// is (sqrt(tau)/||z||) (I - z z^T / ||z||^2), identity elsewhere.
Matrix project_to_ball_backward(const Matrix& raw, const Matrix& grad_features, double tau);

StreamActivations stream_forward(const StreamParams& params, const Matrix& inputs, double tau);

StreamParams stream_backward(const StreamParams& params, const StreamActivations& acts, const Matrix& grad_features,
                             double tau);

struct ModelShape {
  int input_dim = 2;
  int hidden = 32;
  int feature_dim = 16;
  int num_classes = 2;
};

/// Source and target streams merged at a shared classifier (W, b), or at a
/// pair of domain classifiers coupled by beta' ||W - W*||^2 when dual is set.
struct TwoStreamModel {
  ModelShape shape;
  StreamParams source;
  StreamParams target;
  Matrix w;  ///< d x C
  Vector b;
  bool dual = false;
  Matrix w_star;
  Vector b_star;
  double lambda = 1e-4;
  double lambda_star = 1e-4;
  double beta_prime = 1e-3;
  double tau = 256.0;

  /// Both streams start from the same random weights; classifier weights are
  /// small Gaussians, biases zero. tau defaults to 16 * feature_dim.
  static TwoStreamModel init(const ModelShape& shape, std::uint64_t seed, bool dual = false);

  const StreamParams& stream(Domain domain) const { return domain == Domain::Source ? source : target; }
  /// Classifier used to score the given domain.
  const Matrix& classifier_w(Domain domain) const { return dual && domain == Domain::Target ? w_star : w; }
  const Vector& classifier_b(Domain domain) const { return dual && domain == Domain::Target ? b_star : b; }

  void validate() const;
};

/// Projected features of `inputs` (input_dim x M) through the domain's stream.
Matrix forward_features(const TwoStreamModel& model, const Matrix& inputs, Domain domain);

}  // namespace sohot
