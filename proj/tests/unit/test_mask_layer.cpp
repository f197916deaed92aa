#include <gtest/gtest.h>

#include "mcne/mask_layer.hpp"
#include "mcne/param_store.hpp"

using namespace mcne;

namespace {

Matrix row_of(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) out(j++) = x;
  return out;
}

}  // namespace

TEST(Binarize, TieAtZeroIsOne) {
  const BinaryMask b = binarize(row_of({0.3, -0.2, 0.0, -1.0}));
  EXPECT_EQ(b.matrix(), row_of({1, 0, 1, 0}));
}

TEST(Binarize, AllNegativeRowIsZero) {
  const BinaryMask b = binarize(row_of({-0.1, -0.5, -1.0}));
  EXPECT_EQ(b.active(0), 0);
}

TEST(Binarize, UniformDrawIsAboutHalfOnes) {
  Rng rng(4);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  Matrix m(1, 10000);
  for (Eigen::Index j = 0; j < m.cols(); ++j) m(0, j) = d(rng);
  const double frac = static_cast<double>(binarize(m).active(0)) / 10000.0;
  EXPECT_NEAR(frac, 0.5, 0.02);
}

TEST(Binarize, EntrywiseRule) {
  Rng rng(9);
  std::uniform_real_distribution<double> d(-1, 1);
  Matrix m(4, 7);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  const BinaryMask b = binarize(m);
  // {0,1} -> {-1,1} maps back onto the same bits
  EXPECT_EQ(binarize(2.0 * b.matrix().array() - 1.0).matrix(), b.matrix());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) EXPECT_EQ(b.matrix()(i, j), m(i, j) >= 0 ? 1.0 : 0.0);
  }
}

TEST(ApplyMask, WorkedExamples) {
  const Vector u = vec({0.1, 0.9, -0.5, 1});
  const BinaryMask a = binarize(row_of({1, -1, -1, 1}));
  const BinaryMask b = binarize(row_of({-1, 1, 1, -1}));
  EXPECT_EQ(apply_mask(u, a.row(0)), vec({0.1, 0, 0, 1}));
  EXPECT_EQ(apply_mask(u, b.row(0)), vec({0, 0.9, -0.5, 0}));
  const BinaryMask ones = binarize(Matrix::Ones(1, 4));
  EXPECT_EQ(apply_mask(u, ones.row(0)), u);
}

TEST(ApplyMask, SupportWithinMask) {
  Rng rng(2);
  std::normal_distribution<double> d;
  Matrix m(1, 20);
  Vector u(20);
  for (int j = 0; j < 20; ++j) {
    m(0, j) = d(rng);
    u(j) = d(rng);
  }
  const BinaryMask b = binarize(m);
  const Vector out = apply_mask(u, b.row(0));
  for (int j = 0; j < 20; ++j) {
    if (b.matrix()(0, j) == 0) EXPECT_EQ(out(j), 0.0);
  }
}

TEST(ApplyMask, LengthMismatchIsConfigError) {
  const BinaryMask b = binarize(row_of({1, 1}));
  EXPECT_THROW(apply_mask(vec({1, 2, 3}), b.row(0)), ConfigError);
}

TEST(StraightThrough, Identity) {
  EXPECT_EQ(straight_through_backward(row_of({0.5, -0.2})), row_of({0.5, -0.2}));
  EXPECT_EQ(straight_through_backward(Matrix::Zero(2, 3)), Matrix::Zero(2, 3));
}

TEST(StraightThrough, SymbolicTwoByThree) {
  // L(M_b) = sum_ij c_ij * (M_b)_ij^2 has dL/dM_b = 2 c_ij (M_b)_ij.
  Matrix real(2, 3);
  real << 0.3, -0.4, 0.0, -0.9, 0.7, -0.1;
  Matrix coef(2, 3);
  coef << 1.5, -2.0, 0.25, 3.0, -1.0, 0.5;
  const BinaryMask b = binarize(real);
  const Matrix grad_binary = 2.0 * coef.cwiseProduct(b.matrix());
  EXPECT_EQ(straight_through_backward(grad_binary), grad_binary);
}

TEST(StraightThrough, AdamStepFlipsBitAfterCrossing) {
  ParamSet p;
  p.masks.push_back(row_of({0.01}));
  ParamSet g = p.zeros_like();
  g.masks[0](0, 0) = 1.0;
  AdamOptimizer adam(p, AdamHyper{});
  adam.step(p, g, TrainableSet{});
  EXPECT_LT(p.masks[0](0, 0), 0.01);
  EXPECT_EQ(binarize(p.masks[0]).matrix()(0, 0), 1.0);   // 0.007 still on
  for (int s = 0; s < 3; ++s) adam.step(p, g, TrainableSet{});
  EXPECT_LT(p.masks[0](0, 0), 0.0);
  EXPECT_EQ(binarize(p.masks[0]).matrix()(0, 0), 0.0);
}

TEST(FixedDisjoint, BlocksOfTwentyFive) {
  const BinaryMask m = fixed_disjoint_masks(4, 100);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(m.active(r), 25);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) EXPECT_EQ(m.matrix().row(a).dot(m.matrix().row(b)), 0.0);
  }
  EXPECT_EQ(m.matrix().colwise().sum(), Matrix::Ones(1, 100));
}

TEST(FixedDisjoint, RemainderToLastBlock) {
  const BinaryMask m = fixed_disjoint_masks(3, 10);
  EXPECT_EQ(m.active(0), 3);
  EXPECT_EQ(m.active(1), 3);
  EXPECT_EQ(m.active(2), 4);
}

TEST(FixedDisjoint, TooFewDimsIsConfigError) { EXPECT_THROW(fixed_disjoint_masks(5, 3), ConfigError); }
