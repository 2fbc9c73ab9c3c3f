#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "vlgo/data_gen.hpp"

namespace vlgo {
namespace {

/// Rank (1-based) of `partner` among the neighbors of `anchor`, by a full
/// sort on (distance, index).
Index brute_rank(const Eigen::MatrixXd& pts, Index anchor, Index partner) {
  std::vector<std::pair<double, Index>> order;
  for (Index j = 0; j < pts.rows(); ++j) {
    if (j != anchor) order.emplace_back((pts.row(j) - pts.row(anchor)).squaredNorm(), j);
  }
  std::sort(order.begin(), order.end());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (order[r].second == partner) return static_cast<Index>(r) + 1;
  }
  return -1;
}

/// Two-NN intrinsic dimension estimate: n / sum log(r2 / r1).
double two_nn_dimension(const Eigen::MatrixXd& pts) {
  double acc = 0.0;
  Index used = 0;
  for (Index i = 0; i < pts.rows(); ++i) {
    double r1 = INFINITY;
    double r2 = INFINITY;
    for (Index j = 0; j < pts.rows(); ++j) {
      if (j == i) continue;
      const double d = (pts.row(j) - pts.row(i)).norm();
      if (d < r1) {
        r2 = r1;
        r1 = d;
      } else if (d < r2) {
        r2 = d;
      }
    }
    if (r1 > 0.0) {
      acc += std::log(r2 / r1);
      ++used;
    }
  }
  return static_cast<double>(used) / acc;
}

TEST(SwissRoll, NoiseFreePointsLieOnSurface) {
  const SwissRoll roll = swiss_roll(5000, 0.0, 7);
  ASSERT_EQ(roll.points.rows(), 5000);
  ASSERT_EQ(roll.points.cols(), 3);
  for (Index i = 0; i < roll.points.rows(); ++i) {
    const double t = roll.t[i];
    EXPECT_GE(t, 1.5 * std::numbers::pi);
    EXPECT_LT(t, 4.5 * std::numbers::pi);
    EXPECT_GE(roll.h[i], 0.0);
    EXPECT_LT(roll.h[i], 21.0);
    const Eigen::Vector3d surf(t * std::cos(t), roll.h[i], t * std::sin(t));
    EXPECT_LT((roll.points.row(i).transpose() - surf).norm(), 1e-12);
  }
}

TEST(SwissRoll, SeedReproducible) {
  EXPECT_EQ(swiss_roll(500, 0.0, 3).points, swiss_roll(500, 0.0, 3).points);
  EXPECT_EQ(swiss_roll(500, 0.2, 3).points, swiss_roll(500, 0.2, 3).points);
  EXPECT_NE(swiss_roll(500, 0.0, 3).points, swiss_roll(500, 0.0, 4).points);
}

TEST(SwissRoll, NoiseHasRequestedSpread) {
  const SwissRoll roll = swiss_roll(20000, 0.5, 9);
  double ss = 0.0;
  for (Index i = 0; i < roll.points.rows(); ++i) {
    const double t = roll.t[i];
    ss += (roll.points.row(i).transpose() - Eigen::Vector3d(t * std::cos(t), roll.h[i], t * std::sin(t))).squaredNorm();
  }
  EXPECT_NEAR(std::sqrt(ss / (3.0 * 20000)), 0.5, 0.01);
}

TEST(NeighborPairs, RanksMatchBruteForceSort) {
  const SwissRoll roll = swiss_roll(1500, 0.0, 11);
  const PointPairBatch batch = neighbor_pairs(roll.points, 20, 60, 500, 12);
  ASSERT_EQ(batch.size(), 500);
  std::set<Index> seen;
  for (Index i = 0; i < batch.size(); ++i) {
    const auto a = batch.anchors[static_cast<std::size_t>(i)];
    const auto p = batch.partners[static_cast<std::size_t>(i)];
    const Index rank = brute_rank(roll.points, a, p);
    EXPECT_EQ(rank, batch.ranks[static_cast<std::size_t>(i)]);
    EXPECT_GE(rank, 20);
    EXPECT_LE(rank, 60);
    EXPECT_EQ(batch.sources.row(i), roll.points.row(a));
    EXPECT_EQ(batch.targets.row(i), roll.points.row(p));
    seen.insert(rank);
  }
  // Both ends of the inclusive range are reachable.
  EXPECT_TRUE(seen.count(20));
  EXPECT_TRUE(seen.count(60));
}

TEST(NeighborPairs, SingleRankGivesNearestNeighbor) {
  Eigen::MatrixXd pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 3.0, 0.0;
  const PointPairBatch batch = neighbor_pairs(pts, 1, 1, 50, 1);
  const Index nearest[3] = {1, 0, 1};
  for (Index i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(batch.partners[static_cast<std::size_t>(i)], nearest[batch.anchors[static_cast<std::size_t>(i)]]);
  }
}

TEST(NeighborPairs, TiesBrokenByIndex) {
  Eigen::MatrixXd pts(4, 1);
  pts << 0.0, 1.0, -1.0, 1.0;
  const NeighborTable table(pts, 3);
  EXPECT_EQ(table.neighbor(0, 1), 1);
  EXPECT_EQ(table.neighbor(0, 2), 2);
  EXPECT_EQ(table.neighbor(0, 3), 3);
  EXPECT_EQ(table.neighbor(1, 1), 3);
}

TEST(NeighborPairs, InvalidRanksRejected) {
  const SwissRoll roll = swiss_roll(30, 0.0, 1);
  EXPECT_THROW((void)neighbor_pairs(roll.points, 20, 30, 5, 1), std::invalid_argument);
  EXPECT_THROW((void)neighbor_pairs(roll.points, 0, 5, 5, 1), std::invalid_argument);
  EXPECT_THROW((void)neighbor_pairs(roll.points, 6, 5, 5, 1), std::invalid_argument);
}

TEST(NeighborPairs, TableSamplingMatchesFreeFunction) {
  const SwissRoll roll = swiss_roll(400, 0.0, 2);
  const NeighborTable table(roll.points, 60);
  const PointPairBatch a = table.sample(roll.points, 20, 60, 100, 5);
  const PointPairBatch b = neighbor_pairs(roll.points, 20, 60, 100, 5);
  EXPECT_EQ(a.anchors, b.anchors);
  EXPECT_EQ(a.partners, b.partners);
}

TEST(SynthClass, SizesAndLabels) {
  const SynthClassDataset ds = synth_class_manifolds(5, 1, 32, 2, 1);
  EXPECT_EQ(ds.size(), 5);
  std::set<int> labels(ds.labels.begin(), ds.labels.end());
  EXPECT_EQ(labels.size(), 5u);
  const SynthClassDataset big = synth_class_manifolds(4, 30, 16, 2, 1);
  EXPECT_EQ(big.size(), 120);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(std::count(big.labels.begin(), big.labels.end(), k), 30);
}

TEST(SynthClass, ZeroIntrinsicDimCollapsesClass) {
  SynthClassConfig cfg;
  cfg.noise_sd = 0.0;
  const SynthClassDataset ds = synth_class_manifolds(3, 20, 8, 0, 2, cfg);
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.size(); ++j) {
      if (ds.labels[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(j)]) {
        EXPECT_LT((ds.points.row(i) - ds.points.row(j)).norm(), 1e-12);
      }
    }
  }
}

TEST(SynthClass, TwoNnDimensionNearIntrinsic) {
  for (Index dim : {1, 2, 3}) {
    SynthClassConfig cfg;
    cfg.noise_sd = 0.0;
    const SynthClassManifolds gen(1, 32, dim, 100 + static_cast<std::uint64_t>(dim), cfg);
    const SynthClassDataset ds = gen.sample(1500, 3);
    const double est = two_nn_dimension(ds.points);
    EXPECT_NEAR(est, static_cast<double>(dim), 1.0) << "intrinsic " << dim;
  }
}

TEST(SynthClass, PairsShareClassAndStayClose) {
  SynthClassConfig cfg;
  cfg.pair_sd = 0.01;
  cfg.noise_sd = 0.0;
  const SynthClassManifolds gen(3, 16, 2, 4, cfg);
  const auto pairs = gen.sample_pairs(64, 5);
  const auto far = gen.sample_pairs(64, 6);
  ASSERT_EQ(pairs.first.rows(), 64);
  const double near_gap = (pairs.first - pairs.second).rowwise().norm().mean();
  const double random_gap = (pairs.first - far.first).rowwise().norm().mean();
  EXPECT_LT(near_gap, 0.2 * random_gap);
  EXPECT_THROW(SynthClassManifolds(2, 4, 5, 1), std::invalid_argument);
}

}  // namespace
}  // namespace vlgo
