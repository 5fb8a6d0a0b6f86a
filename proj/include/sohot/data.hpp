#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "sohot/tensor_stats.hpp"

namespace sohot {

/// Column-wise inputs with one integer label per column.
struct LabeledSet {
  Matrix inputs;  ///< input_dim x n
  std::vector<int> labels;

  Eigen::Index size() const { return inputs.cols(); }
  Eigen::Index dim() const { return inputs.rows(); }
};

struct DomainData {
  LabeledSet source_train;
  LabeledSet source_test;
  LabeledSet target_train;
  LabeledSet target_test;

  int dim() const;
  /// One more than the largest label seen in any split.
  int num_classes() const;
};

/// Class-conditional Gaussians for the source domain and a per-class rigid
/// motion plus scale for the target: target class c is drawn from
/// N(m_c + offset_c, A_c R_c S_c R_c^T A_c) with A_c = diag(sqrt(scale_c)).
struct ShiftSpec {
  int num_classes = 3;
  int input_dim = 2;
  std::vector<Vector> source_means;
  std::vector<Matrix> source_covs;
  std::vector<double> rotation;  ///< radians, in [0, pi)
  std::vector<Vector> scale;     ///< per-axis covariance scale, > 0
  std::vector<Vector> mean_offset;
  int n_source_train = 20;
  int n_target_train = 3;
  int n_source_test = 200;
  int n_target_test = 200;
  std::uint64_t seed = 0;

  /// Throws ArgumentError on inconsistent sizes, non-finite or out-of-range
  /// parameters, or a covariance that is not positive definite.
  void validate() const;
};

/// Knobs of the stock synthetic benchmark.
struct ShiftKnobs {
  int classes = 3;
  int dim = 2;
  double rot_deg = 30.0;
  double mean_shift = 1.0;
  double scale = 1.0;
  int n_src = 20;
  int n_tgt = 3;
  int n_test = 200;
  std::uint64_t seed = 0;
};

/// Class means on a circle of radius 0.8 in the first two coordinates, elongated
/// covariances whose orientation varies by class, target means displaced by
/// `mean_shift` tangentially to that circle.
ShiftSpec make_shift_spec(const ShiftKnobs& knobs);

/// Rotation by `angle` in the (0,1) plane, and also the (2,3) plane when dim >= 4.
Matrix plane_rotation(int dim, double angle);

DomainData generate(const ShiftSpec& spec);

/// CSV with header `domain,split,label,f0,...,f{d-1}`.
void save_features(const DomainData& data, std::ostream& out);
void save_features(const DomainData& data, const std::filesystem::path& path);

/// Throws ParseError (with the 1-based line) on malformed content and
/// EmptyDatasetError when no data rows are present.
DomainData load_features(std::istream& in);
DomainData load_features(const std::filesystem::path& path);

/// Shortest decimal that round-trips the double.
std::string format_double(double value);

}  // namespace sohot
