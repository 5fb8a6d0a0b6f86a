#include "sohot/kernel_align.hpp"

#include <string>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

void check_pair(const Matrix& source, const Matrix& target) {
  if (source.cols() < 1 || target.cols() < 1) throw ArgumentError("kernel blocks need N, N* >= 1");
  if (source.rows() != target.rows()) {
    throw ShapeError("source dim " + std::to_string(source.rows()) + " != target dim " +
                     std::to_string(target.rows()));
  }
}

// X^T X with the lower triangle mirrored from the upper so the result is
// bitwise symmetric.
Matrix symmetric_gram(const Matrix& centred) {
  Matrix gram = centred.transpose() * centred;
  return gram.selfadjointView<Eigen::Upper>();
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw CapacityError("cost model overflows 64 bits");
  return out;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw CapacityError("cost model overflows 64 bits");
  return out;
}

}  // namespace

Matrix centre_columns(const Matrix& features, Vector* mean) {
  Vector mu = compute_mean(features);
  Matrix out = features.colwise() - mu;
  if (mean != nullptr) *mean = std::move(mu);
  return out;
}

Matrix elementwise_power(const Matrix& m, int power) {
  if (power < 1) throw ArgumentError("elementwise power must be >= 1");
  Matrix out = m;
  for (int i = 1; i < power; ++i) out.array() *= m.array();
  return out;
}

KernelBlocks build_kernel_blocks(const Matrix& source, const Matrix& target, int order) {
  check_pair(source, target);
  if (order < 1) throw ArgumentError("kernel order must be >= 1");
  const Matrix xs = centre_columns(source);
  const Matrix ys = centre_columns(target);
  KernelBlocks blocks;
  blocks.k_ss = symmetric_gram(xs);
  blocks.k_tt = symmetric_gram(ys);
  blocks.k_st = xs.transpose() * ys;
  blocks.order = order;
  return blocks;
}

double kernel_tensor_inner(const KernelBlocks& blocks) {
  const double scale = 1.0 / (static_cast<double>(blocks.n_source()) * static_cast<double>(blocks.n_target()));
  return scale * elementwise_power(blocks.k_st, blocks.order).sum();
}

double kernel_frob_dist_sq(const KernelBlocks& blocks, int order) {
  const double n = static_cast<double>(blocks.n_source());
  const double m = static_cast<double>(blocks.n_target());
  const double ss = elementwise_power(blocks.k_ss, order).sum() / (n * n);
  const double tt = elementwise_power(blocks.k_tt, order).sum() / (m * m);
  const double st = elementwise_power(blocks.k_st, order).sum() / (n * m);
  const double dist = (ss + tt) - 2.0 * st;
  return dist < 0.0 ? 0.0 : dist;
}

double kernel_frob_dist_sq(const Matrix& source, const Matrix& target, int order) {
  return kernel_frob_dist_sq(build_kernel_blocks(source, target, order), order);
}

std::uint64_t cost_model(int dim, int n_source, int n_target, int order, CostMode mode) {
  if (dim < 1 || n_source < 1 || n_target < 1 || order < 1) throw ArgumentError("cost_model needs positive sizes");
  const std::uint64_t n = static_cast<std::uint64_t>(n_source);
  const std::uint64_t m = static_cast<std::uint64_t>(n_target);
  if (mode == CostMode::Explicit) {
    return checked_mul(n + m + 1, unique_coeff_count(dim, order));
  }
  const std::uint64_t pairs = checked_add(checked_add(checked_mul(n, n), checked_mul(n, m)), checked_mul(m, m));
  return checked_mul(pairs, static_cast<std::uint64_t>(dim));
}

}  // namespace sohot
