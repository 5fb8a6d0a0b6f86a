#include "sohot/tensor_stats.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

// binom(n, k); false on 64-bit overflow.
bool checked_binom(std::uint64_t n, std::uint64_t k, std::uint64_t& out) {
  if (k > n) {
    out = 0;
    return true;
  }
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // acc * (n - k + i) / i stays integral at every step.
    acc = acc * (n - k + i) / i;
    if (acc > static_cast<unsigned __int128>(UINT64_MAX)) return false;
  }
  out = static_cast<std::uint64_t>(acc);
  return true;
}

// Number of nondecreasing tuples of length `len` with entries in [lo, dim).
std::uint64_t tail_count(int dim, int lo, int len) {
  std::uint64_t out = 0;
  checked_binom(static_cast<std::uint64_t>(dim - lo + len - 1), static_cast<std::uint64_t>(len), out);
  return out;
}

void fill_multiplicities(int dim, int order, std::vector<double>& out) {
  double factorial = 1.0;
  for (int i = 2; i <= order; ++i) factorial *= i;

  std::size_t pos = 0;
  // start is the previous index; denom is the product of run-length factorials.
  auto recurse = [&](auto&& self, int depth, int start, int run, double denom) -> void {
    for (int i = start; i < dim; ++i) {
      const int next_run = (depth > 0 && i == start) ? run + 1 : 1;
      const double next_denom = denom * next_run;
      if (depth + 1 == order) {
        out[pos++] = factorial / next_denom;
      } else {
        self(self, depth + 1, i, next_run, next_denom);
      }
    }
  };
  recurse(recurse, 0, 0, 0, 1.0);
}

// Adds the packed outer power of `x` into `out`.
void accumulate_outer_power(const double* x, int dim, int order, double* out) {
  if (order == 1) {
    for (int i = 0; i < dim; ++i) out[i] += x[i];
    return;
  }
  std::size_t pos = 0;
  auto recurse = [&](auto&& self, int depth, int start, double prefix) -> void {
    if (depth + 1 == order) {
      double* dst = out + pos;
      const int len = dim - start;
      for (int j = 0; j < len; ++j) dst[j] += prefix * x[start + j];
      pos += static_cast<std::size_t>(len);
      return;
    }
    for (int i = start; i < dim; ++i) self(self, depth + 1, i, prefix * x[i]);
  };
  recurse(recurse, 0, 0, 1.0);
}

}  // namespace

void FeatureMatrix::validate() const {
  if (data.cols() < 1 || data.rows() < 1) throw ArgumentError("feature matrix is empty");
  if (!data.allFinite()) throw ArgumentError("feature matrix contains NaN or Inf");
}

std::uint64_t default_coeff_cap() {
  const char* env = std::getenv("SOHOT_MEM_CAP");
  if (env == nullptr) return kDefaultCoeffCap;
  std::string_view text(env);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) return kDefaultCoeffCap;
  return value;
}

std::uint64_t unique_coeff_count(int dim, int order) {
  if (dim < 1 || order < 1) throw ArgumentError("unique_coeff_count needs d >= 1 and r >= 1");
  std::uint64_t out = 0;
  if (!checked_binom(static_cast<std::uint64_t>(dim) + order - 1, static_cast<std::uint64_t>(order), out)) {
    throw CapacityError("binom(" + std::to_string(dim) + "+" + std::to_string(order) + "-1, " +
                        std::to_string(order) + ") overflows 64 bits");
  }
  return out;
}

PackedLayout::PackedLayout(int dim, int order, std::uint64_t count)
    : dim_(dim), order_(order), multiplicity_(count) {
  fill_multiplicities(dim, order, multiplicity_);
}

std::shared_ptr<const PackedLayout> PackedLayout::get(int dim, int order, std::uint64_t coeff_cap) {
  const std::uint64_t count = unique_coeff_count(dim, order);
  if (count > coeff_cap) {
    throw CapacityError("explicit tensor with d=" + std::to_string(dim) + ", r=" + std::to_string(order) +
                        " needs " + std::to_string(count) + " coefficients, cap is " +
                        std::to_string(coeff_cap));
  }
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const PackedLayout>> cache;
  std::lock_guard lock(mutex);
  auto& entry = cache[{dim, order}];
  if (!entry) entry = std::make_shared<const PackedLayout>(dim, order, count);
  return entry;
}

std::size_t PackedLayout::slot(std::span<const int> index) const {
  if (static_cast<int>(index.size()) != order_) throw ShapeError("index tuple length differs from tensor order");
  std::vector<int> sorted(index.begin(), index.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0 || sorted.back() >= dim_) throw ShapeError("tensor index out of range");

  std::uint64_t rank = 0;
  int lo = 0;
  for (int k = 0; k < order_; ++k) {
    const int remaining = order_ - k - 1;
    for (int v = lo; v < sorted[k]; ++v) rank += remaining == 0 ? 1 : tail_count(dim_, v, remaining);
    lo = sorted[k];
  }
  return static_cast<std::size_t>(rank);
}

std::vector<int> PackedLayout::multi_index(std::size_t slot) const {
  if (slot >= size()) throw ShapeError("packed slot out of range");
  std::vector<int> out(order_);
  std::uint64_t rest = slot;
  int lo = 0;
  for (int k = 0; k < order_; ++k) {
    const int remaining = order_ - k - 1;
    int v = lo;
    for (;; ++v) {
      const std::uint64_t block = remaining == 0 ? 1 : tail_count(dim_, v, remaining);
      if (rest < block) break;
      rest -= block;
    }
    out[k] = v;
    lo = v;
  }
  return out;
}

ScatterTensor::ScatterTensor(std::shared_ptr<const PackedLayout> layout, std::vector<double> coeffs, Vector mean)
    : layout_(std::move(layout)), coeffs_(std::move(coeffs)), mean_(std::move(mean)) {
  if (coeffs_.size() != layout_->size()) throw ShapeError("coefficient count does not match packed layout");
  if (mean_.size() != layout_->dim()) throw ShapeError("mean dimension does not match tensor dimension");
}

ScatterTensor ScatterTensor::zero(int dim, int order) {
  auto layout = PackedLayout::get(dim, order);
  std::vector<double> coeffs(layout->size(), 0.0);
  return ScatterTensor(std::move(layout), std::move(coeffs), Vector::Zero(dim));
}

double ScatterTensor::at(std::span<const int> index) const { return coeffs_[layout_->slot(index)]; }

Matrix ScatterTensor::slice(std::span<const int> trailing) const {
  if (order() < 2 || static_cast<int>(trailing.size()) != order() - 2) {
    throw ShapeError("slice needs order >= 2 and order - 2 trailing indices");
  }
  const int d = dim();
  Matrix out(d, d);
  std::vector<int> index(order());
  std::copy(trailing.begin(), trailing.end(), index.begin() + 2);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      index[0] = i;
      index[1] = j;
      out(i, j) = at(index);
    }
  }
  return out;
}

Vector compute_mean(const Matrix& features) {
  if (features.cols() < 1 || features.rows() < 1) throw ArgumentError("compute_mean on an empty matrix");
  return features.rowwise().sum() / static_cast<double>(features.cols());
}

ScatterTensor compute_scatter(const Matrix& features, int order, std::uint64_t coeff_cap) {
  if (order < 1) throw ArgumentError("scatter order must be >= 1");
  Vector mean = compute_mean(features);
  const int d = static_cast<int>(features.rows());
  auto layout = PackedLayout::get(d, order, coeff_cap);

  std::vector<double> coeffs(layout->size(), 0.0);
  Vector centred(d);
  for (Eigen::Index n = 0; n < features.cols(); ++n) {
    centred = features.col(n) - mean;
    accumulate_outer_power(centred.data(), d, order, coeffs.data());
  }
  const double inv_n = 1.0 / static_cast<double>(features.cols());
  for (double& c : coeffs) c *= inv_n;
  return ScatterTensor(std::move(layout), std::move(coeffs), std::move(mean));
}

double tensor_inner(const ScatterTensor& a, const ScatterTensor& b) {
  if (a.order() != b.order() || a.dim() != b.dim()) {
    throw ShapeError("tensor_inner: order/dim mismatch (" + std::to_string(a.order()) + "," +
                     std::to_string(a.dim()) + ") vs (" + std::to_string(b.order()) + "," +
                     std::to_string(b.dim()) + ")");
  }
  const auto mult = a.layout().multiplicities();
  const auto ca = a.coeffs();
  const auto cb = b.coeffs();
  double sum = 0.0;
  // a*b is commutative bitwise, so <a,b> == <b,a> exactly.
  for (std::size_t k = 0; k < ca.size(); ++k) sum += mult[k] * (ca[k] * cb[k]);
  return sum;
}

double tensor_frob_dist_sq(const ScatterTensor& a, const ScatterTensor& b) {
  const double cross = tensor_inner(a, b);
  const double dist = (tensor_inner(a, a) + tensor_inner(b, b)) - 2.0 * cross;
  return dist < 0.0 ? 0.0 : dist;
}

}  // namespace sohot
