#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sohot/errors.hpp"
#include "sohot/tensor_stats.hpp"

using namespace sohot;
using sohot::testing::dense_scatter;
using sohot::testing::random_matrix;

namespace {

Matrix row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) m(0, i++) = v;
  return m;
}

}  // namespace

TEST(ComputeMean, TwoPointAverage) { EXPECT_DOUBLE_EQ(compute_mean(row({1.0, 3.0}))(0), 2.0); }

TEST(ComputeMean, SingleColumnIsIdentity) {
  Vector v(3);
  v << 0.5, -2.0, 7.25;
  EXPECT_EQ(compute_mean(Matrix(v)), v);
}

TEST(ComputeMean, MatchesNaiveLoop) {
  std::mt19937_64 rng(11);
  const Matrix x = random_matrix(rng, 3, 50);
  const auto oracle = sohot::testing::naive_mean(x);
  const Vector mu = compute_mean(x);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mu(i), oracle[i], 1e-12);
}

TEST(ComputeMean, EmptyThrows) { EXPECT_THROW(compute_mean(Matrix(3, 0)), ArgumentError); }

TEST(ComputeScatter, TwoPointVariance) {
  const ScatterTensor s = compute_scatter(row({1.0, 3.0}), 2);
  ASSERT_EQ(s.coeffs().size(), 1u);
  EXPECT_DOUBLE_EQ(s.coeffs()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.mean()(0), 2.0);
}

TEST(ComputeScatter, FirstOrderIsZero) {
  std::mt19937_64 rng(3);
  const ScatterTensor s = compute_scatter(random_matrix(rng, 4, 7), 1);
  for (double c : s.coeffs()) EXPECT_NEAR(c, 0.0, 1e-15);
}

TEST(ComputeScatter, MatchesDenseOuterProductOracle) {
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(rng, 3, 5);
  const ScatterTensor s = compute_scatter(x, 3);
  const auto dense = dense_scatter(x, 3);
  for (std::size_t flat = 0; flat < dense.size(); ++flat) {
    EXPECT_NEAR(s.at(sohot::testing::unflatten(flat, 3, 3)), dense[flat], 1e-12);
  }
}

TEST(ComputeScatter, CapExceededNamesCoefficientCount) {
  std::mt19937_64 rng(1);
  try {
    compute_scatter(random_matrix(rng, 10, 3), 3, 100);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("220"), std::string::npos) << e.what();
  }
}

TEST(ComputeScatter, DuplicatedSampleSetGivesSameTensor) {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(rng, 3, 6);
  Matrix doubled(3, 12);
  doubled << x, x;
  const ScatterTensor a = compute_scatter(x, 3);
  const ScatterTensor b = compute_scatter(doubled, 3);
  for (std::size_t k = 0; k < a.coeffs().size(); ++k) EXPECT_NEAR(a.coeffs()[k], b.coeffs()[k], 1e-13);
}

TEST(UniqueCoeffCount, KnownValues) {
  EXPECT_EQ(unique_coeff_count(4096, 2), 8390656u);
  EXPECT_EQ(unique_coeff_count(1, 7), 1u);
  EXPECT_EQ(unique_coeff_count(3, 3), 10u);
}

TEST(UniqueCoeffCount, OverflowThrows) { EXPECT_THROW(unique_coeff_count(1000000000, 12), CapacityError); }

TEST(UniqueCoeffCount, RejectsNonPositive) {
  EXPECT_THROW(unique_coeff_count(0, 2), ArgumentError);
  EXPECT_THROW(unique_coeff_count(2, 0), ArgumentError);
}

TEST(PackedLayout, SlotAndMultiIndexAgree) {
  for (int d : {1, 2, 5}) {
    for (int r : {1, 2, 3, 4}) {
      auto layout = PackedLayout::get(d, r);
      ASSERT_EQ(layout->size(), unique_coeff_count(d, r));
      double dense_total = 0.0;
      std::vector<int> prev;
      for (std::size_t k = 0; k < layout->size(); ++k) {
        const auto idx = layout->multi_index(k);
        EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
        if (k > 0) EXPECT_TRUE(std::lexicographical_compare(prev.begin(), prev.end(), idx.begin(), idx.end()));
        EXPECT_EQ(layout->slot(idx), k);
        dense_total += layout->multiplicities()[k];
        prev = idx;
      }
      EXPECT_DOUBLE_EQ(dense_total, std::pow(d, r));
    }
  }
}

TEST(TensorInner, ZeroTensors) {
  EXPECT_EQ(tensor_inner(ScatterTensor::zero(3, 2), ScatterTensor::zero(3, 2)), 0.0);
}

TEST(TensorInner, SecondOrderIsTraceOfProduct) {
  std::mt19937_64 rng(2);
  const ScatterTensor a = compute_scatter(random_matrix(rng, 4, 6), 2);
  const ScatterTensor b = compute_scatter(random_matrix(rng, 4, 9), 2);
  const Matrix am = a.slice({});
  const Matrix bm = b.slice({});
  EXPECT_NEAR(tensor_inner(a, b), (am * bm.transpose()).trace(), 1e-12);
}

TEST(TensorInner, MatchesDenseLoop) {
  std::mt19937_64 rng(9);
  const Matrix x = random_matrix(rng, 4, 5);
  const Matrix y = random_matrix(rng, 4, 7);
  const double oracle = sohot::testing::dense_inner(dense_scatter(x, 3), dense_scatter(y, 3));
  EXPECT_NEAR(tensor_inner(compute_scatter(x, 3), compute_scatter(y, 3)), oracle, 1e-10);
}

TEST(TensorInner, ShapeMismatchThrows) {
  EXPECT_THROW(tensor_inner(ScatterTensor::zero(3, 2), ScatterTensor::zero(3, 3)), ShapeError);
  EXPECT_THROW(tensor_inner(ScatterTensor::zero(3, 2), ScatterTensor::zero(4, 2)), ShapeError);
  EXPECT_THROW(tensor_frob_dist_sq(ScatterTensor::zero(2, 2), ScatterTensor::zero(4, 2)), ShapeError);
}

TEST(TensorFrobDist, SelfDistanceIsZero) {
  std::mt19937_64 rng(4);
  const ScatterTensor a = compute_scatter(random_matrix(rng, 3, 5), 3);
  EXPECT_EQ(tensor_frob_dist_sq(a, a), 0.0);
}

TEST(TensorFrobDist, AgainstZeroIsSquaredNorm) {
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(rng, 3, 5);
  const auto dense = dense_scatter(x, 2);
  EXPECT_NEAR(tensor_frob_dist_sq(compute_scatter(x, 2), ScatterTensor::zero(3, 2)),
              sohot::testing::dense_inner(dense, dense), 1e-12);
}

TEST(TensorFrobDist, MatchesElementwiseOracle) {
  std::mt19937_64 rng(12);
  const Matrix x = random_matrix(rng, 3, 6);
  const Matrix y = random_matrix(rng, 3, 4, 1.5);
  const double oracle = sohot::testing::dense_dist_sq(dense_scatter(x, 4), dense_scatter(y, 4));
  EXPECT_NEAR(tensor_frob_dist_sq(compute_scatter(x, 4), compute_scatter(y, 4)), oracle, 1e-10);
}

TEST(TensorProperties, DistanceIsExactlySymmetric) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const ScatterTensor a = compute_scatter(random_matrix(rng, 4, 5), 3);
    const ScatterTensor b = compute_scatter(random_matrix(rng, 4, 3), 3);
    EXPECT_EQ(tensor_frob_dist_sq(a, b), tensor_frob_dist_sq(b, a));
  }
}

TEST(TensorProperties, SuperSymmetryUnderPermutation) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> order_dist(2, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int r = order_dist(rng);
    const int d = 5;
    const ScatterTensor t = compute_scatter(random_matrix(rng, d, 4), r);
    std::vector<int> idx(static_cast<std::size_t>(r));
    std::uniform_int_distribution<int> pick(0, d - 1);
    for (int& i : idx) i = pick(rng);
    std::vector<int> perm = idx;
    std::shuffle(perm.begin(), perm.end(), rng);
    const double a = t.at(idx);
    const double b = t.at(perm);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0);
  }
}

TEST(TensorProperties, EvenOrderSlicesArePsd) {
  std::mt19937_64 rng(41);
  for (int r : {2, 4}) {
    for (int d = 1; d <= 8; ++d) {
      const ScatterTensor t = compute_scatter(random_matrix(rng, d, 6), r);
      std::vector<int> trailing(static_cast<std::size_t>(r - 2), 0);
      // all trailing tuples of the form (j, j, ...): for r = 4 every (i3, i4) pair
      for (int a = 0; a < (r == 4 ? d : 1); ++a) {
        for (int b = 0; b < (r == 4 ? d : 1); ++b) {
          if (r == 4) trailing = {a, b};
          if (r == 4 && a != b) continue;  // off-diagonal slices need not be PSD
          Eigen::SelfAdjointEigenSolver<Matrix> eig(t.slice(trailing));
          EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9) << "r=" << r << " d=" << d;
        }
      }
    }
  }
}

TEST(TensorProperties, OddOrderStoredLikeDenseOracle) {
  std::mt19937_64 rng(51);
  for (int d = 1; d <= 4; ++d) {
    const Matrix x = random_matrix(rng, d, 5);
    for (int r : {1, 3, 5}) {
      const ScatterTensor t = compute_scatter(x, r);
      const auto dense = dense_scatter(x, r);
      for (std::size_t flat = 0; flat < dense.size(); ++flat) {
        EXPECT_NEAR(t.at(sohot::testing::unflatten(flat, d, r)), dense[flat], 1e-12);
      }
    }
  }
}

TEST(FeatureMatrix, ValidateRejectsEmptyAndNonFinite) {
  FeatureMatrix empty{Matrix(2, 0)};
  EXPECT_THROW(empty.validate(), ArgumentError);
  FeatureMatrix bad{Matrix::Ones(2, 2)};
  bad.data(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), ArgumentError);
  FeatureMatrix good{Matrix::Ones(2, 2)};
  EXPECT_NO_THROW(good.validate());
}
