#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "test_support.hpp"
#include "vlgo/expm.hpp"

namespace vlgo {
namespace {

using testing::randn;
using testing::taylor_expm;

double frob_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a.array() * b.array()).sum(); }

TEST(Expm, ZeroIsIdentity) {
  EXPECT_TRUE(expm(Eigen::MatrixXd::Zero(2, 2)).isApprox(Eigen::MatrixXd::Identity(2, 2), 0.0));
}

TEST(Expm, QuarterTurnRotation) {
  Eigen::Matrix2d a;
  a << 0.0, -std::numbers::pi / 2, std::numbers::pi / 2, 0.0;
  Eigen::Matrix2d want;
  want << 0.0, -1.0, 1.0, 0.0;
  EXPECT_LT((expm(a) - want).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Expm, Diagonal) {
  const Eigen::Matrix2d e = expm(Eigen::Vector2d(1.0, -1.0).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(e(0, 0), std::exp(1.0), 1e-14);
  EXPECT_NEAR(e(1, 1), std::exp(-1.0), 1e-15);
  EXPECT_EQ(e(0, 1), 0.0);
  EXPECT_EQ(e(1, 0), 0.0);
}

TEST(Expm, MatchesScaledTaylorSeries) {
  Rng rng = make_rng(11);
  for (double sd : {0.01, 0.3, 1.0, 3.0}) {
    for (int n : {1, 3, 6}) {
      const Eigen::MatrixXd a = randn(n, n, rng, sd);
      const Eigen::MatrixXd ref = taylor_expm(a);
      EXPECT_LT((expm(a) - ref).norm() / ref.norm(), 1e-12) << "n=" << n << " sd=" << sd;
    }
  }
}

TEST(Expm, RejectsNonFiniteAndNonSquare) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW((void)expm(a), std::invalid_argument);
  a(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW((void)expm(a), std::invalid_argument);
  EXPECT_THROW((void)expm(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST(Expm, Deterministic) {
  Rng rng = make_rng(12);
  const Eigen::MatrixXd a = randn(5, 5, rng, 2.0);
  EXPECT_EQ(expm(a), expm(a));
}

TEST(ExpmProperty, InverseOfNegation) {
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    Eigen::MatrixXd a = randn(n, n, rng);
    a *= 5.0 * uniform01(rng) / a.norm();
    const Eigen::MatrixXd prod = expm(a) * expm(Eigen::MatrixXd(-a));
    EXPECT_LT((prod - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-8) << "trial " << trial;
  }
}

TEST(ExpmProperty, AntisymmetricIsOrthogonal) {
  Rng rng = make_rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 6));
    const Eigen::MatrixXd s = randn(n, n, rng, 2.0);
    const Eigen::MatrixXd q = expm(Eigen::MatrixXd(s - s.transpose()));
    EXPECT_LT((q.transpose() * q - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-8);
  }
}

TEST(ExpmProperty, BlockDiagIsBlockwiseBitIdentical) {
  Rng rng = make_rng(15);
  std::vector<Eigen::MatrixXd> blocks{randn(3, 3, rng), randn(3, 3, rng), randn(3, 3, rng)};
  const BlockDiagMatrix<double> bd(blocks);
  const BlockDiagMatrix<double> e = expm(bd);
  ASSERT_EQ(e.num_blocks(), 3);
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(e.block(j), expm(blocks[static_cast<std::size_t>(j)]));
}

TEST(ExpmFrechet, ZeroDirectionGivesZero) {
  Rng rng = make_rng(16);
  const Eigen::MatrixXd a = randn(3, 3, rng);
  const auto fr = expm_frechet(a, Eigen::MatrixXd::Zero(3, 3));
  EXPECT_EQ(fr.derivative.norm(), 0.0);
  EXPECT_LT((fr.value - expm(a)).norm(), 1e-12 * expm(a).norm());
}

TEST(ExpmFrechet, AtZeroIsIdentityMap) {
  Rng rng = make_rng(17);
  const Eigen::MatrixXd e = randn(3, 3, rng);
  EXPECT_LT((expm_frechet(Eigen::MatrixXd::Zero(3, 3), e).derivative - e).norm(), 1e-14);
}

TEST(ExpmFrechet, MatchesCentralDifferences) {
  Rng rng = make_rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd a = randn(3, 3, rng);
    a *= 3.0 * uniform01(rng) / a.norm();
    const Eigen::MatrixXd e = randn(3, 3, rng);
    const double h = 1e-5;
    const Eigen::MatrixXd fd =
        (taylor_expm(Eigen::MatrixXd(a + h * e)) - taylor_expm(Eigen::MatrixXd(a - h * e))) / (2.0 * h);
    const Eigen::MatrixXd l = expm_frechet(a, e).derivative;
    EXPECT_LT((l - fd).norm() / fd.norm(), 1e-6) << "trial " << trial;
  }
}

TEST(ExpmFrechet, DimensionMismatchThrows) {
  EXPECT_THROW((void)expm_frechet(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(2, 2)), std::invalid_argument);
  EXPECT_THROW((void)expm_vjp(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(4, 4)), std::invalid_argument);
}

TEST(ExpmVjp, ZeroCotangentAndZeroPoint) {
  Rng rng = make_rng(19);
  const Eigen::MatrixXd a = randn(4, 4, rng);
  const Eigen::MatrixXd g = randn(4, 4, rng);
  EXPECT_EQ(Eigen::MatrixXd(expm_vjp(a, Eigen::MatrixXd::Zero(4, 4))).norm(), 0.0);
  EXPECT_LT((Eigen::MatrixXd(expm_vjp(Eigen::MatrixXd::Zero(4, 4), g)) - g).norm(), 1e-14);
}

TEST(ExpmVjp, AdjointIdentityOverRandomDirections) {
  Rng rng = make_rng(20);
  const Eigen::MatrixXd a = randn(4, 4, rng);
  const Eigen::MatrixXd g = randn(4, 4, rng);
  const Eigen::MatrixXd adj = expm_vjp(a, g);
  for (int k = 0; k < 100; ++k) {
    const Eigen::MatrixXd e = randn(4, 4, rng);
    const double lhs = frob_inner(g, expm_frechet(a, e).derivative);
    const double rhs = frob_inner(adj, e);
    EXPECT_LT(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-8);
  }
}

}  // namespace
}  // namespace vlgo
