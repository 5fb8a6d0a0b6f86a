#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sohot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Domain { Source, Target };

/// Features of one class in one domain, stored column-wise (d rows, N columns).
struct FeatureMatrix {
  Matrix data;
  int class_id = 0;
  Domain domain = Domain::Source;

  Eigen::Index dim() const { return data.rows(); }
  Eigen::Index size() const { return data.cols(); }

  /// Throws ArgumentError when empty or when any entry is NaN/Inf.
  void validate() const;
};

inline constexpr std::uint64_t kDefaultCoeffCap = std::uint64_t{1} << 30;

/// Coefficient cap for explicit tensors: SOHOT_MEM_CAP when set and valid,
/// kDefaultCoeffCap otherwise.
std::uint64_t default_coeff_cap();

/// binom(d + r - 1, r), the number of distinct entries of a super-symmetric
/// tensor of order r over R^d. Throws CapacityError on 64-bit overflow.
std::uint64_t unique_coeff_count(int dim, int order);

/// Packed storage layout for super-symmetric tensors.
///
/// Coefficient k holds the entry for the k-th nondecreasing multi-index
/// (i_1 <= ... <= i_r) in lexicographic order. The multiplicity of a slot is
/// the number of distinct permutations of its multi-index, i.e. how many of
/// the d^r dense entries share that value.
class PackedLayout {
 public:
  /// Shared, cached layout for (dim, order). Throws CapacityError when the
  /// coefficient count exceeds `coeff_cap`.
  static std::shared_ptr<const PackedLayout> get(int dim, int order,
                                                 std::uint64_t coeff_cap = default_coeff_cap());

  int dim() const { return dim_; }
  int order() const { return order_; }
  std::size_t size() const { return multiplicity_.size(); }
  std::span<const double> multiplicities() const { return multiplicity_; }

  /// Slot of an arbitrary index tuple; the tuple need not be sorted.
  std::size_t slot(std::span<const int> index) const;

  /// Sorted multi-index stored at `slot`.
  std::vector<int> multi_index(std::size_t slot) const;

  PackedLayout(int dim, int order, std::uint64_t count);

 private:
  int dim_;
  int order_;
  std::vector<double> multiplicity_;
};

/// Mean-centred order-r scatter of a sample set together with its mean.
class ScatterTensor {
 public:
  ScatterTensor(std::shared_ptr<const PackedLayout> layout, std::vector<double> coeffs, Vector mean);

  static ScatterTensor zero(int dim, int order);

  int order() const { return layout_->order(); }
  int dim() const { return layout_->dim(); }
  std::span<const double> coeffs() const { return coeffs_; }
  const Vector& mean() const { return mean_; }
  const PackedLayout& layout() const { return *layout_; }

  /// Entry at any (unsorted) index tuple of length order().
  double at(std::span<const int> index) const;

  /// The d x d slice X(:, :, trailing...) for a tensor of order >= 2.
  Matrix slice(std::span<const int> trailing) const;

 private:
  std::shared_ptr<const PackedLayout> layout_;
  std::vector<double> coeffs_;
  Vector mean_;
};

Vector compute_mean(const Matrix& features);

/// (1/N) sum_n (phi_n - mu)^{(x) r}, packed.
ScatterTensor compute_scatter(const Matrix& features, int order,
                              std::uint64_t coeff_cap = default_coeff_cap());

/// Full Frobenius inner product over all d^r entries.
double tensor_inner(const ScatterTensor& a, const ScatterTensor& b);

/// ||a - b||_F^2 via <a,a> - 2<a,b> + <b,b>; cancellation noise below zero is
/// clamped to 0.
double tensor_frob_dist_sq(const ScatterTensor& a, const ScatterTensor& b);

}  // namespace sohot
