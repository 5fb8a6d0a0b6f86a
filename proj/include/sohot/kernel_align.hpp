#pragma once

#include <cstdint>

#include "sohot/tensor_stats.hpp"

namespace sohot {

/// Centred linear Gram matrices for one source/target pair. The polynomial
/// kernels of any order are their elementwise powers, applied on read, so one
/// set of blocks serves every order of a multi-order loss.
struct KernelBlocks {
  Matrix k_ss;  ///< <x_n - mu, x_n' - mu>, N x N
  Matrix k_tt;  ///< <y_n - mu*, y_n' - mu*>, N* x N*
  Matrix k_st;  ///< <x_n - mu, y_n' - mu*>, N x N*
  int order = 2;

  Eigen::Index n_source() const { return k_ss.rows(); }
  Eigen::Index n_target() const { return k_tt.rows(); }
};

/// Columns minus their mean; `mean` receives the mean when non-null.
Matrix centre_columns(const Matrix& features, Vector* mean = nullptr);

/// Elementwise power by repeated multiplication.
Matrix elementwise_power(const Matrix& m, int power);

KernelBlocks build_kernel_blocks(const Matrix& source, const Matrix& target, int order);

/// <X^(r), Y^(r)> = (1 / (N N*)) 1^T (K_st)^r 1 at blocks.order.
double kernel_tensor_inner(const KernelBlocks& blocks);

/// ||X^(r) - Y^(r)||_F^2 from shared Grams at an arbitrary order r.
double kernel_frob_dist_sq(const KernelBlocks& blocks, int order);

double kernel_frob_dist_sq(const Matrix& source, const Matrix& target, int order);

enum class CostMode { Explicit, Kernelized };

/// Leading-term operation counts:
///   Explicit:   (N + N* + 1) * binom(d + r - 1, r)
///   Kernelized: (N^2 + N N* + N*^2) * d
/// Throws CapacityError on 64-bit overflow.
std::uint64_t cost_model(int dim, int n_source, int n_target, int order, CostMode mode);

}  // namespace sohot
