#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "test_support.hpp"
#include "vlgo/sparse_inference.hpp"

namespace vlgo {
namespace {

using testing::kl_quadrature;
using testing::numeric_grad;
using testing::randn;
using testing::randn_vec;
using testing::rel_err;

OperatorDictionaryd rotation_dict() {
  OperatorDictionaryd dict(1, 2, 2);
  dict.op(0).block(0) << 0.0, -1.0, 1.0, 0.0;
  return dict;
}

OperatorDictionaryd random_dict(Index m, Index d, Index b, Rng& rng, double sd) {
  OperatorDictionaryd dict(m, d, b);
  dict.assign_flat(randn_vec(dict.num_params(), rng, sd));
  return dict;
}

LaplacianParams single(double shift, double scale) { return LaplacianParams::constant(1, shift, scale); }

TEST(Fista, IdenticalPairWithLargePenaltyGivesZero) {
  Rng rng = make_rng(1);
  const OperatorDictionaryd dict = random_dict(3, 4, 2, rng, 0.5);
  const Eigen::VectorXd z = randn_vec(4, rng);
  FistaConfig cfg;
  cfg.l1_weight = 10.0;
  const FistaResult r = fista_infer(dict, z, z, cfg);
  EXPECT_EQ(r.c, Eigen::VectorXd::Zero(3));
}

TEST(Fista, RecoversRotationAngle) {
  const OperatorDictionaryd dict = rotation_dict();
  const Eigen::Vector2d z(1.0, 0.4);
  const Eigen::Vector2d target(std::cos(0.3) * z[0] - std::sin(0.3) * z[1], std::sin(0.3) * z[0] + std::cos(0.3) * z[1]);
  FistaConfig cfg;
  cfg.l1_weight = 1e-4;
  cfg.max_iters = 500;
  cfg.tol = 1e-10;
  const FistaResult r = fista_infer(dict, z, target, cfg);
  EXPECT_LT(std::abs(r.c[0] - 0.3), 1e-2);
}

TEST(Fista, ObjectiveNotAboveZeroInit) {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const OperatorDictionaryd dict = random_dict(6, 3, 3, rng, 0.5);
    const Eigen::VectorXd z = randn_vec(3, rng);
    const Eigen::VectorXd t = z + randn_vec(3, rng, 0.3);
    const FistaConfig cfg;
    const FistaResult r = fista_infer(dict, z, t, cfg);
    EXPECT_LE(r.objective, (t - z).squaredNorm() + 1e-12);
    EXPECT_NEAR(r.objective, manifold_loss_value(dict, z, t, r.c) + cfg.l1_weight * r.c.lpNorm<1>(), 1e-10);
  }
}

TEST(Fista, RejectsBadConfigAndDiverges) {
  Rng rng = make_rng(3);
  const OperatorDictionaryd dict = random_dict(2, 4, 2, rng, 0.5);
  const Eigen::VectorXd z = randn_vec(4, rng);
  FistaConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW((void)fista_infer(dict, z, z, cfg), std::invalid_argument);
  Eigen::VectorXd bad = z;
  bad[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW((void)fista_infer(dict, z, bad, FistaConfig{}), DivergenceError);
}

// Subgradient optimality at the returned coefficients.
TEST(FistaProperty, L1OptimalityConditions) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 2 + static_cast<Index>(uniform_index(rng, 3));
    const OperatorDictionaryd dict = random_dict(m, 4, 4, rng, 0.4);
    const Eigen::VectorXd z = randn_vec(4, rng);
    const Eigen::VectorXd t = transport(dict, randn_vec(m, rng, 0.8), z) + randn_vec(4, rng, 0.05);
    FistaConfig cfg;
    cfg.l1_weight = 0.05 + 0.5 * uniform01(rng);
    cfg.max_iters = 5000;
    cfg.tol = 1e-12;
    const FistaResult r = fista_infer(dict, z, t, cfg);
    const Eigen::VectorXd g = coefficient_gradient(dict, z, t, r.c);
    for (Index i = 0; i < m; ++i) {
      if (r.c[i] == 0.0) {
        EXPECT_LE(std::abs(g[i]), cfg.l1_weight + 1e-3) << "trial " << trial << " i " << i;
      } else {
        EXPECT_LE(std::abs(g[i] + cfg.l1_weight * (r.c[i] > 0 ? 1.0 : -1.0)), 1e-3) << "trial " << trial;
      }
    }
  }
}

TEST(CoefficientGradient, MatchesFiniteDifferences) {
  Rng rng = make_rng(5);
  const OperatorDictionaryd dict = random_dict(3, 6, 3, rng, 0.4);
  const Eigen::VectorXd z = randn_vec(6, rng);
  const Eigen::VectorXd t = randn_vec(6, rng);
  const Eigen::VectorXd c = randn_vec(3, rng);
  const Eigen::VectorXd fd =
      numeric_grad([&](const Eigen::VectorXd& x) { return manifold_loss_value(dict, z, t, x); }, c);
  EXPECT_LT(rel_err(coefficient_gradient(dict, z, t, c), fd), 1e-7);
}

TEST(SampleLaplacian, ZeroScaleReturnsShift) {
  Rng rng = make_rng(6);
  const LaplacianParams p{Eigen::Vector3d(0.1, -2.0, 5.0), Eigen::VectorXd::Zero(3)};
  EXPECT_EQ(sample_laplacian(p, rng).value, p.shift);
}

TEST(SampleLaplacian, MedianAndMeanAbsoluteDeviation) {
  const double mu = 0.7;
  const double b = 0.3;
  const int n = 100000;
  Rng rng = make_rng(7);
  std::vector<double> xs(n);
  double mad = 0.0;
  for (int i = 0; i < n; ++i) {
    xs[i] = sample_laplacian(single(mu, b), rng).value[0];
    mad += std::abs(xs[i] - mu);
  }
  mad /= n;
  std::nth_element(xs.begin(), xs.begin() + n / 2, xs.end());
  // Both statistics have standard error b / sqrt(n) for a Laplacian.
  const double se = b / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(xs[n / 2] - mu), 3.0 * se);
  EXPECT_LT(std::abs(mad - b), 3.0 * se);
}

TEST(SampleLaplacian, ReparameterizationGradients) {
  Rng rng = make_rng(8);
  const LaplacianParams p{randn_vec(4, rng), Eigen::Vector4d(0.2, 0.5, 1.0, 2.0)};
  const Eigen::VectorXd w = randn_vec(4, rng);
  Rng draw = make_rng(9);
  const LaplacianSample s = sample_laplacian(p, draw);
  const LaplacianGrad g = reparam_backward(s, w);
  const auto f_shift = [&](const Eigen::VectorXd& shift) {
    Rng r = make_rng(9);
    return w.dot(sample_laplacian(LaplacianParams{shift, p.scale}, r).value);
  };
  const auto f_scale = [&](const Eigen::VectorXd& scale) {
    Rng r = make_rng(9);
    return w.dot(sample_laplacian(LaplacianParams{p.shift, scale}, r).value);
  };
  EXPECT_LT(rel_err(g.shift, numeric_grad(f_shift, p.shift)), 1e-8);
  EXPECT_LT(rel_err(g.scale, numeric_grad(f_scale, p.scale)), 1e-8);
}

TEST(SoftThreshold, Values) {
  EXPECT_EQ(soft_threshold(Eigen::Vector3d(0.005, -0.01, 0.0), 0.01), Eigen::Vector3d::Zero());
  EXPECT_NEAR(soft_threshold(Eigen::VectorXd::Constant(1, 0.5), 0.01)[0], 0.49, 1e-15);
  EXPECT_NEAR(soft_threshold(Eigen::VectorXd::Constant(1, -0.5), 0.01)[0], -0.49, 1e-15);
  EXPECT_THROW((void)soft_threshold(Eigen::VectorXd::Zero(1), -1.0), std::invalid_argument);
}

TEST(SoftThreshold, StraightThroughBackwardIsIdentity) {
  Rng rng = make_rng(10);
  const Eigen::VectorXd s = randn_vec(5, rng, 0.02);
  const StraightThrough st = StraightThrough::apply(s, 0.01);
  const Eigen::VectorXd up = randn_vec(5, rng);
  EXPECT_EQ(st.backward(up), up);
  EXPECT_EQ(st.value, soft_threshold(s, 0.01));
}

TEST(SoftThresholdProperty, ExactZerosOnlyWhenThresholded) {
  Rng rng = make_rng(11);
  const LaplacianParams p = LaplacianParams::constant(1, 0.0, 0.05);
  int zeros_std = 0;
  int zeros_thr = 0;
  for (int i = 0; i < 10000; ++i) {
    const LaplacianSample s = sample_laplacian(p, rng);
    zeros_std += s.value[0] == 0.0;
    zeros_thr += soft_threshold(s.value, 0.01)[0] == 0.0;
  }
  EXPECT_EQ(zeros_std, 0);
  EXPECT_GT(zeros_thr, 0);
}

TEST(BestOfMany, SingleSampleIsThatSample) {
  Rng rng = make_rng(12);
  const OperatorDictionaryd dict = random_dict(3, 4, 2, rng, 0.4);
  const Eigen::VectorXd z = randn_vec(4, rng);
  const Eigen::VectorXd t = randn_vec(4, rng);
  const LaplacianParams p = LaplacianParams::constant(3, 0.1, 0.2);
  Rng a = make_rng(13);
  Rng b = make_rng(13);
  const BestOfMany best = best_of_many(dict, z, t, p, VariationalConfig{1, 0.0, false, 0.0}, a);
  const LaplacianSample s = sample_laplacian(p, b);
  EXPECT_EQ(best.c, s.value);
  EXPECT_EQ(best.index, 0);
}

TEST(BestOfMany, PicksExactTransportCandidate) {
  // Scale 0 on two coordinates and a tiny scale on the third makes every
  // candidate agree except in c_3; the one nearest the truth must win.
  Rng rng = make_rng(14);
  const OperatorDictionaryd dict = random_dict(3, 4, 4, rng, 0.4);
  const Eigen::VectorXd z = randn_vec(4, rng);
  const Eigen::Vector3d truth(0.2, -0.1, 0.0);
  const Eigen::VectorXd t = transport(dict, truth, z);
  const LaplacianParams p{truth, Eigen::VectorXd::Zero(3)};
  Rng r = make_rng(15);
  const BestOfMany best = best_of_many(dict, z, t, p, VariationalConfig{8, 0.0, false, 0.0}, r);
  EXPECT_EQ(best.c, Eigen::VectorXd(truth));
  EXPECT_LT(best.loss, 1e-28);
  EXPECT_EQ(best.index, 0);
}

TEST(BestOfManyProperty, SelectedLossNonIncreasingInJ) {
  Rng rng = make_rng(16);
  const std::vector<int> js{1, 2, 5, 10, 20, 50};
  std::vector<double> mean(js.size(), 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const OperatorDictionaryd dict = random_dict(3, 4, 2, rng, 0.4);
    const Eigen::VectorXd z = randn_vec(4, rng);
    const Eigen::VectorXd t = randn_vec(4, rng);
    const LaplacianParams p = LaplacianParams::constant(3, 0.0, 0.5);
    for (std::size_t k = 0; k < js.size(); ++k) {
      Rng r = make_rng(17, {static_cast<std::uint64_t>(trial)});
      mean[k] += best_of_many(dict, z, t, p, VariationalConfig{js[k], 0.0, false, 0.0}, r).loss / 100.0;
    }
  }
  for (std::size_t k = 1; k < js.size(); ++k) EXPECT_LE(mean[k], mean[k - 1]) << "J=" << js[k];
  EXPECT_LT(mean.back(), mean.front());
}

// Frozen random dictionaries; the posterior is centered on a perturbed FISTA
// solution (an imperfect amortized encoder) with the encoder's initial scale.
TEST(BestOfManyProperty, J50CloseToFista) {
  Rng rng = make_rng(18);
  int close = 0;
  const int pairs = 200;
  for (int i = 0; i < pairs; ++i) {
    const Index d = 2 * (1 + static_cast<Index>(uniform_index(rng, 4)));
    const OperatorDictionaryd dict = random_dict(3, d, d, rng, 0.4);
    const Eigen::VectorXd z = randn_vec(d, rng);
    const Eigen::VectorXd t = transport(dict, randn_vec(3, rng, 0.5), z) + randn_vec(d, rng, 0.1);
    FistaConfig fc;
    fc.l1_weight = 0.01;
    const FistaResult exact = fista_infer(dict, z, t, fc);
    const LaplacianParams post{exact.c + randn_vec(3, rng, 0.01), Eigen::VectorXd::Constant(3, 0.01)};
    const BestOfMany best = best_of_many(dict, z, t, post, VariationalConfig{50, 0.0, false, 0.0}, rng);
    close += best.loss <= 1.25 * exact.smooth_loss;
  }
  EXPECT_GE(close, static_cast<int>(0.9 * pairs));
}

TEST(KlLaplacian, IdenticalIsZero) {
  Rng rng = make_rng(19);
  const LaplacianParams p{randn_vec(5, rng), Eigen::VectorXd::Constant(5, 0.3)};
  EXPECT_NEAR(kl_laplacian(p, p).value, 0.0, 1e-15);
}

TEST(KlLaplacian, ScaleRatioCase) {
  const double closed = kl_laplacian(single(0.0, 0.01), single(0.0, 0.02)).value;
  EXPECT_NEAR(closed, std::log(2.0) + 0.5 - 1.0, 1e-15);
  EXPECT_NEAR(closed, kl_quadrature(0.0, 0.01, 0.0, 0.02), 1e-6);
}

TEST(KlLaplacian, MatchesQuadratureOnRandomParameters) {
  Rng rng = make_rng(20);
  for (int trial = 0; trial < 40; ++trial) {
    const double mq = standard_normal(rng);
    const double mp = standard_normal(rng);
    const double bq = std::exp(2.0 * standard_normal(rng) - 1.0);
    const double bp = std::exp(2.0 * standard_normal(rng) - 1.0);
    const double closed = kl_laplacian(single(mq, bq), single(mp, bp)).value;
    EXPECT_NEAR(closed, kl_quadrature(mq, bq, mp, bp), 1e-6 * std::max(1.0, closed)) << "trial " << trial;
  }
}

TEST(KlLaplacian, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(21);
  const LaplacianParams q{randn_vec(4, rng), (randn_vec(4, rng, 0.3).array().exp()).matrix()};
  const LaplacianParams p{randn_vec(4, rng), (randn_vec(4, rng, 0.3).array().exp()).matrix()};
  const KlResult r = kl_laplacian(q, p);
  EXPECT_LT(rel_err(r.q.shift, numeric_grad([&](const Eigen::VectorXd& x) { return kl_laplacian({x, q.scale}, p).value; }, q.shift)), 1e-6);
  EXPECT_LT(rel_err(r.q.scale, numeric_grad([&](const Eigen::VectorXd& x) { return kl_laplacian({q.shift, x}, p).value; }, q.scale)), 1e-6);
  EXPECT_LT(rel_err(r.p.shift, numeric_grad([&](const Eigen::VectorXd& x) { return kl_laplacian(q, {x, p.scale}).value; }, p.shift)), 1e-6);
  EXPECT_LT(rel_err(r.p.scale, numeric_grad([&](const Eigen::VectorXd& x) { return kl_laplacian(q, {p.shift, x}).value; }, p.scale)), 1e-6);
}

TEST(KlLaplacianProperty, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng = make_rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const LaplacianParams q{randn_vec(3, rng), (randn_vec(3, rng).array().exp()).matrix()};
    const LaplacianParams p{randn_vec(3, rng), (randn_vec(3, rng).array().exp()).matrix()};
    EXPECT_GT(kl_laplacian(q, p).value, 0.0);
  }
}

TEST(KlLaplacian, RejectsNonPositiveScale) {
  EXPECT_THROW((void)kl_laplacian(single(0.0, 0.0), single(0.0, 1.0)), std::invalid_argument);
  EXPECT_THROW((void)kl_laplacian(single(0.0, 1.0), single(0.0, -1.0)), std::invalid_argument);
}

TEST(VariationalConfig, Validation) {
  EXPECT_THROW(validate(VariationalConfig{0, 0.01, false, 0.0}), std::invalid_argument);
  EXPECT_THROW(validate(VariationalConfig{1, -0.01, false, 0.0}), std::invalid_argument);
  EXPECT_NO_THROW(validate(VariationalConfig{}));
}

}  // namespace
}  // namespace vlgo
