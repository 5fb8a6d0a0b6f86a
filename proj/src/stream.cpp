#include "sohot/stream.hpp"

#include <cmath>
#include <random>

#include "sohot/errors.hpp"

namespace sohot {

bool StreamParams::same_shape(const StreamParams& other) const {
  return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() && b1.size() == other.b1.size() &&
         w2.rows() == other.w2.rows() && w2.cols() == other.w2.cols() && b2.size() == other.b2.size();
}

void StreamParams::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

Matrix project_to_ball(const Matrix& raw, double tau) {
  Matrix out = raw;
  const double radius = std::sqrt(tau);
  for (Eigen::Index n = 0; n < out.cols(); ++n) {
    const double sq = out.col(n).squaredNorm();
    if (sq > tau) out.col(n) *= radius / std::sqrt(sq);
  }
  return out;
}

Matrix project_to_ball_backward(const Matrix& raw, const Matrix& grad_features, double tau) {
  Matrix out = grad_features;
  const double radius = std::sqrt(tau);
  for (Eigen::Index n = 0; n < raw.cols(); ++n) {
    const double sq = raw.col(n).squaredNorm();
    if (sq <= tau) continue;
    const double norm = std::sqrt(sq);
    const double along = raw.col(n).dot(grad_features.col(n)) / sq;
    out.col(n) = (radius / norm) * (grad_features.col(n) - along * raw.col(n));
  }
  return out;
}

StreamActivations stream_forward(const StreamParams& params, const Matrix& inputs, double tau) {
  if (inputs.rows() != params.w1.cols()) throw ShapeError("stream input dimension mismatch");
  StreamActivations acts;
  acts.inputs = inputs;
  Matrix pre = params.w1 * inputs;
  pre.colwise() += params.b1;
  acts.hidden = pre.array().tanh().matrix();
  acts.raw = params.w2 * acts.hidden;
  acts.raw.colwise() += params.b2;
  acts.features = project_to_ball(acts.raw, tau);
  return acts;
}

StreamParams stream_backward(const StreamParams& params, const StreamActivations& acts, const Matrix& grad_features,
                             double tau) {
  const Matrix grad_raw = project_to_ball_backward(acts.raw, grad_features, tau);
  StreamParams grads;
  grads.w2 = grad_raw * acts.hidden.transpose();
  grads.b2 = grad_raw.rowwise().sum();
  const Matrix grad_pre = ((params.w2.transpose() * grad_raw).array() * (1.0 - acts.hidden.array().square())).matrix();
  grads.w1 = grad_pre * acts.inputs.transpose();
  grads.b1 = grad_pre.rowwise().sum();
  return grads;
}

TwoStreamModel TwoStreamModel::init(const ModelShape& shape, std::uint64_t seed, bool dual) {
  if (shape.input_dim < 1 || shape.hidden < 1 || shape.feature_dim < 1 || shape.num_classes < 2) {
    throw ArgumentError("model shape needs positive dimensions and at least two classes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * normal(rng);
    }
    return m;
  };

  TwoStreamModel model;
  model.shape = shape;
  model.source.w1 = gaussian(shape.hidden, shape.input_dim, 1.0 / std::sqrt(static_cast<double>(shape.input_dim)));
  model.source.b1 = Vector::Zero(shape.hidden);
  model.source.w2 = gaussian(shape.feature_dim, shape.hidden, 1.0 / std::sqrt(static_cast<double>(shape.hidden)));
  model.source.b2 = Vector::Zero(shape.feature_dim);
  model.target = model.source;
  model.w = gaussian(shape.feature_dim, shape.num_classes, 0.01);
  model.b = Vector::Zero(shape.num_classes);
  model.dual = dual;
  if (dual) {
    model.w_star = model.w;
    model.b_star = model.b;
  }
  model.tau = 16.0 * shape.feature_dim;
  return model;
}

void TwoStreamModel::validate() const {
  if (!source.same_shape(target)) throw ShapeError("source and target streams differ in shape");
  if (source.w1.cols() != shape.input_dim || source.w1.rows() != shape.hidden ||
      source.w2.rows() != shape.feature_dim) {
    throw ShapeError("stream parameters do not match the model shape");
  }
  if (w.rows() != shape.feature_dim || w.cols() != shape.num_classes || b.size() != shape.num_classes) {
    throw ShapeError("classifier does not match the model shape");
  }
  if (dual && (w_star.rows() != w.rows() || w_star.cols() != w.cols() || b_star.size() != b.size())) {
    throw ShapeError("target classifier does not match the shared classifier shape");
  }
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
}

Matrix forward_features(const TwoStreamModel& model, const Matrix& inputs, Domain domain) {
  return stream_forward(model.stream(domain), inputs, model.tau).features;
}

}  // namespace sohot
