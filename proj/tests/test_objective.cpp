// Dependence objectives: correlation blocks, joint assembly, the log-det
// losses against closed forms and an eigendecomposition oracle, spectrum
// estimation, and the projection heads.

#include "connlearn/objective.hpp"

#include <gtest/gtest.h>

#include <Eigen/QR>

#include <cmath>

namespace {

using namespace connlearn;
using namespace connlearn::objective;

Matrix orthonormal_columns(int n, int d, Rng& rng) {
  const Matrix a = rng.normal_matrix(n, d);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(n, d);
}

TEST(CorrelationBlock, SingleSampleOuterProduct) {
  Matrix z_low = Matrix::Zero(1, 3);
  z_low(0, 0) = 1.0;  // e1
  Matrix z_high = Matrix::Zero(1, 2);
  const double eps = 1e-12;
  const CorrelationBlock b = correlation_block(z_low, z_high, eps);
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 0) = 1.0;
  expected.diagonal().array() += eps;
  EXPECT_TRUE(b.r_low.isApprox(expected, 1e-12));
  EXPECT_TRUE(b.cross.isZero());
}

TEST(CorrelationBlock, IndependentBatchesHaveVanishingCross) {
  Rng rng(21);
  const int n = 4000;
  const Matrix f = rng.normal_matrix(n, 3);
  const Matrix g = rng.normal_matrix(n, 2);
  const CorrelationBlock b = correlation_block(f, g, 1e-6);
  EXPECT_LT(b.cross.cwiseAbs().maxCoeff(), 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST(CorrelationBlock, ScaledOrthonormalColumnsGiveIdentity) {
  Rng rng(22);
  const int n = 24, d = 5;
  const double eps = 1e-4;
  const Matrix z = std::sqrt(static_cast<double>(n)) * orthonormal_columns(n, d, rng);
  const CorrelationBlock b = correlation_block(z, z, eps);
  Matrix expected = Matrix::Identity(d, d);
  expected.diagonal().array() += eps;
  EXPECT_TRUE(b.r_low.isApprox(expected, 1e-10));
}

TEST(CorrelationBlock, RejectsBadInput) {
  EXPECT_THROW(correlation_block(Matrix::Zero(2, 2), Matrix::Zero(3, 2), 1e-4), InvalidInput);
  EXPECT_THROW(correlation_block(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 0.0), InvalidInput);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(correlation_block(bad, Matrix::Zero(2, 2), 1e-4), InvalidInput);
}

TEST(AssembleJoint, BlockLayoutAndSymmetry) {
  CorrelationBlock b;
  b.r_low = Matrix::Constant(1, 1, 2.0);
  b.r_high = Matrix::Constant(1, 1, 3.0);
  b.cross = Matrix::Constant(1, 1, 0.5);
  const Matrix j = assemble_joint(b);
  Matrix expected(2, 2);
  expected << 2.0, 0.5, 0.5, 3.0;
  EXPECT_TRUE(j.isApprox(expected));

  Rng rng(23);
  CorrelationBlock r;
  const Matrix zl = rng.normal_matrix(10, 4), zh = rng.normal_matrix(10, 2);
  r = correlation_block(zl, zh, 1e-3);
  const Matrix jj = assemble_joint(r);
  EXPECT_TRUE(jj.isApprox(jj.transpose(), 1e-14));

  CorrelationBlock zero_cross = r;
  zero_cross.cross.setZero();
  const Matrix jz = assemble_joint(zero_cross);
  EXPECT_TRUE(jz.topRightCorner(4, 2).isZero());
}

TEST(HfmcaLoss, ZeroCrossBlockGivesZeroLoss) {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    CorrelationBlock b = correlation_block(rng.normal_matrix(12, 4), rng.normal_matrix(12, 3), 1e-4);
    b.cross.setZero();
    EXPECT_NEAR(hfmca_loss(b), 0.0, 1e-9);
  }
}

TEST(HfmcaLoss, ClosedFormHalfIdentityCross) {
  // det(R_LH) = (1 - 0.25)^2 via the Schur complement, so the loss is, in
  // closed form, 2 ln 0.75.
  CorrelationBlock b;
  b.r_low = Matrix::Identity(2, 2);
  b.r_high = Matrix::Identity(2, 2);
  b.cross = 0.5 * Matrix::Identity(2, 2);
  b.epsilon = 0.0;
  EXPECT_NEAR(hfmca_loss(b), 2.0 * std::log(0.75), 1e-10);
}

TEST(HfmcaLoss, NonPositiveOnRandomBlocks) {
  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = rng.below(2) == 0 ? 2 : 4;
    const int k = rng.below(2) == 0 ? 2 : 8;
    const int n = 3 + static_cast<int>(rng.below(40));
    const CorrelationBlock b =
        correlation_block(rng.normal_matrix(n, t * k), rng.normal_matrix(n, k), 1e-4 + rng.uniform() * 1e-2);
    EXPECT_LE(hfmca_loss(b), 1e-9);
  }
}

TEST(HfmcaLoss, SingularJointReportsCondition) {
  CorrelationBlock b;
  b.r_low = Matrix::Ones(2, 2);  // rank 1
  b.r_high = Matrix::Identity(2, 2);
  b.cross = Matrix::Zero(2, 2);
  b.epsilon = 0.0;
  try {
    hfmca_loss(b);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
  }
}

TEST(HfmcaLoss, GradientMatchesFiniteDifferences) {
  Rng rng(26);
  const Matrix zl = rng.normal_matrix(8, 6);  // T=2, K=3
  const Matrix zh = rng.normal_matrix(8, 3);
  const double eps = 1e-3, h = 1e-5;
  const LossGrad lg = hfmca_loss_with_grad(zl, zh, eps);

  auto loss_at = [&](const Matrix& a, const Matrix& b) { return hfmca_loss(correlation_block(a, b, eps)); };
  for (Eigen::Index i = 0; i < zl.rows(); ++i)
    for (Eigen::Index j = 0; j < zl.cols(); ++j) {
      Matrix up = zl, down = zl;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_at(up, zh) - loss_at(down, zh)) / (2.0 * h);
      const double a = lg.d_z_low(i, j);
      EXPECT_LT(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}), 1e-4);
    }
  for (Eigen::Index i = 0; i < zh.rows(); ++i)
    for (Eigen::Index j = 0; j < zh.cols(); ++j) {
      Matrix up = zh, down = zh;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_at(zl, up) - loss_at(zl, down)) / (2.0 * h);
      const double a = lg.d_z_high(i, j);
      EXPECT_LT(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}), 1e-4);
    }
}

TEST(HfmcaLoss, ScaleResponseVanishesWithRidge) {
  // with eps = 0 the log-det scale terms cancel exactly; at eps = 1e-8 the
  // deviation must stay under 1e-4
  Rng rng(27);
  const Matrix zl = rng.normal_matrix(32, 6);
  const Matrix zh = rng.normal_matrix(32, 3);
  const double eps = 1e-8;
  const double base = hfmca_loss(correlation_block(zl, zh, eps));
  for (double c : {0.5, 2.0, 7.5}) {
    const double scaled = hfmca_loss(correlation_block(c * zl, zh, eps));
    EXPECT_NEAR(scaled, base, 1e-4) << "c=" << c;
  }
}

TEST(HfmcaLoss, TapeNodeAgreesWithBlockRoute) {
  // dual route: the differentiable node and the block-based evaluation must
  // compute the same number
  Rng rng(28);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix zl = rng.normal_matrix(10, 4), zh = rng.normal_matrix(10, 2);
    const double eps = 1e-4 + rng.uniform() * 1e-3;
    ad::Tape t;
    const double via_tape = t.value(dependence_loss_node(t.input(zl), t.input(zh), eps))(0, 0);
    const double via_block = hfmca_loss(correlation_block(zl, zh, eps));
    EXPECT_NEAR(via_tape, via_block, 1e-12);
  }
}

TEST(FmcaLoss, SelfPairMatchesEigenOracle) {
  // F == G: loss = sum_i ln(1 - lambda_i^2 / (lambda_i + eps)^2) over the
  // eigenvalues of the raw second moment
  Rng rng(29);
  const Matrix f = rng.normal_matrix(40, 4);
  const double eps = 1e-3;
  const Matrix r = (f.transpose() * f) / 40.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(r);
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double lam = es.eigenvalues()(i);
    expected += std::log(1.0 - lam * lam / ((lam + eps) * (lam + eps)));
  }
  EXPECT_NEAR(fmca_loss(f, f, eps), expected, 1e-10);
}

TEST(FmcaLoss, IndependentBatchesNearZeroAndSymmetry) {
  Rng rng(30);
  const int n = 5000;
  const Matrix f = rng.normal_matrix(n, 3), g = rng.normal_matrix(n, 3);
  const double loss = fmca_loss(f, g, 1e-4);
  EXPECT_LE(loss, 1e-9);
  EXPECT_GT(loss, -0.05);  // statistical tolerance at N = 5000
  EXPECT_NEAR(fmca_loss(f, g, 1e-4), fmca_loss(g, f, 1e-4), 1e-10);
}

TEST(FmcaSpectrum, PerfectDependenceGivesUnitValues) {
  Rng rng(31);
  const int n = 30, d = 4;
  const Matrix f = std::sqrt(static_cast<double>(n)) * orthonormal_columns(n, d, rng);
  const auto vals = fmca_spectrum(f, f, 1e-12);
  ASSERT_EQ(vals.size(), 4u);
  for (double v : vals) EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(FmcaSpectrum, IndependentBatchesGiveSmallValues) {
  Rng rng(32);
  const int n = 4000;
  const auto vals = fmca_spectrum(rng.normal_matrix(n, 3), rng.normal_matrix(n, 3), 1e-6);
  for (double v : vals) EXPECT_LT(v, 5.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_TRUE(std::is_sorted(vals.rbegin(), vals.rend()));  // descending
}

// ---- projection heads -------------------------------------------------------------

ProjectionHeads effective_identity_heads(int dim, int n_views) {
  // relu(z + M) - M == z for z > -M, so the two-layer low head acts as the
  // identity on the test range
  ProjectionHeads h;
  h.n_views = n_views;
  h.out_dim = dim;
  h.embedding_dim = dim;
  const double shift = 1e3;
  h.low_w1 = Matrix::Identity(dim, dim);
  h.low_b1 = Matrix::Constant(1, dim, shift);
  h.low_w2 = Matrix::Identity(dim, dim);
  h.low_b2 = Matrix::Constant(1, dim, -shift);
  for (int t = 0; t < n_views; ++t) {
    h.high_w.push_back(Matrix::Identity(dim, dim));
    h.high_b.push_back(Matrix::Zero(1, dim));
  }
  return h;
}

TEST(ProjectionHeads_, LowHeadConcatenatesViews) {
  Rng rng(33);
  const auto h = effective_identity_heads(3, 2);
  const Matrix z1 = rng.normal_matrix(1, 3), z2 = rng.normal_matrix(1, 3);
  const Matrix out = project_low({z1, z2}, h);
  ASSERT_EQ(out.cols(), 6);
  EXPECT_TRUE(out.leftCols(3).isApprox(z1, 1e-9));
  EXPECT_TRUE(out.rightCols(3).isApprox(z2, 1e-9));

  const auto h1 = effective_identity_heads(3, 1);
  EXPECT_TRUE(project_low({z1}, h1).isApprox(z1, 1e-9));  // T=1 degenerate concatenation
  EXPECT_THROW(project_low({z1}, h), InvalidInput);       // view-count mismatch
}

TEST(ProjectionHeads_, ZeroEmbeddingsStayZeroForBiasFreeHeads) {
  ProjectionHeads h = effective_identity_heads(3, 2);
  h.low_b1.setZero();
  h.low_b2.setZero();
  const Matrix z = Matrix::Zero(1, 3);
  EXPECT_TRUE(project_low({z, z}, h).isZero());
}

TEST(ProjectionHeads_, HighHeadSumsViews) {
  Rng rng(34);
  const Matrix z = rng.normal_matrix(1, 3);
  auto h = effective_identity_heads(3, 1);
  EXPECT_TRUE(project_high({z}, h).isApprox(z));  // T=1 identity head

  auto h2 = effective_identity_heads(3, 2);
  EXPECT_TRUE(project_high({z, z}, h2).isApprox(2.0 * z));  // linearity

  for (auto& w : h2.high_w) w.setZero();
  EXPECT_TRUE(project_high({z, z}, h2).isZero());
}

TEST(ProjectionHeads_, TapeRouteMatchesPlainRoute) {
  Rng rng(35);
  ProjectionHeads h = init_projection_heads(4, 3, 2, rng);
  const Matrix z1 = rng.normal_matrix(5, 4), z2 = rng.normal_matrix(5, 4);

  ad::Tape t;
  const HeadVars hv = head_vars(t, h);
  const ad::Var zl = project_low_tape({t.input(z1), t.input(z2)}, hv);
  const ad::Var zh = project_high_tape({t.input(z1), t.input(z2)}, hv);

  for (int row = 0; row < 5; ++row) {
    const Matrix low = project_low({Matrix(z1.row(row)), Matrix(z2.row(row))}, h);
    const Matrix high = project_high({Matrix(z1.row(row)), Matrix(z2.row(row))}, h);
    EXPECT_TRUE(t.value(zl).row(row).isApprox(low.row(0), 1e-12));
    EXPECT_TRUE(t.value(zh).row(row).isApprox(high.row(0), 1e-12));
  }
}

TEST(TraceScaledRidge, TracksFeatureScale) {
  Rng rng(36);
  const Matrix z = rng.normal_matrix(50, 4);
  const double eps = trace_scaled_epsilon(z, 1e-4);
  const double scaled = trace_scaled_epsilon(10.0 * z, 1e-4);
  EXPECT_NEAR(scaled / eps, 100.0, 1e-6);
  EXPECT_DOUBLE_EQ(trace_scaled_epsilon(Matrix::Zero(5, 3), 1e-4), 1e-4);  // floor at eps itself
}

}  // namespace
