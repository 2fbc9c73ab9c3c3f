#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "vlgo/contrastive.hpp"
#include "vlgo/experiments.hpp"

namespace vlgo {
namespace {

using testing::numeric_grad;
using testing::randn;
using testing::randn_vec;

/// Direct long-double evaluation of the temperature-normalized InfoNCE.
double brute_info_nce(const Eigen::VectorXd& a, const Eigen::VectorXd& p, const Eigen::MatrixXd& negs, double tau,
                      bool normalized) {
  auto dist = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    long double s = 0.0L;
    const long double nx = normalized ? std::sqrt(static_cast<long double>(x.squaredNorm())) : 1.0L;
    const long double ny = normalized ? std::sqrt(static_cast<long double>(y.squaredNorm())) : 1.0L;
    for (Index k = 0; k < x.size(); ++k) {
      const long double d = x[k] / nx - y[k] / ny;
      s += d * d;
    }
    return s;
  };
  const long double pos = std::exp(-dist(a, p) / tau);
  long double den = pos;
  for (Index j = 0; j < negs.rows(); ++j) den += std::exp(-dist(a, negs.row(j).transpose()) / tau);
  return static_cast<double>(-std::log(pos / den));
}

ContrastiveConfig config(DistanceKind kind, double tau = 0.5) {
  ContrastiveConfig cfg;
  cfg.temperature = tau;
  cfg.distance = kind;
  return cfg;
}

TEST(InfoNce, EqualDistanceNegativeGivesLogTwo) {
  const Eigen::Vector2d a(0.0, 0.0);
  const Eigen::Vector2d p(1.0, 0.0);
  Eigen::MatrixXd negs(1, 2);
  negs << 0.0, -1.0;
  EXPECT_NEAR(info_nce(a, p, negs, config(DistanceKind::squared)).value, std::log(2.0), 1e-15);
}

TEST(InfoNce, FarNegativesGiveZero) {
  const Eigen::Vector2d a(0.3, -0.2);
  Eigen::MatrixXd negs(3, 2);
  negs << 1e3, 0.0, 0.0, -1e3, -1e3, 1e3;
  const double far = info_nce(a, a, negs, config(DistanceKind::squared)).value;
  EXPECT_GE(far, 0.0);
  EXPECT_LT(far, 1e-300);
  double prev = INFINITY;
  for (double scale : {1e-3, 2e-3, 3e-3, 4e-3, 5e-3}) {
    const double v = info_nce(a, a, scale * negs, config(DistanceKind::squared)).value;
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(InfoNce, MatchesBruteForce) {
  Rng rng = make_rng(1);
  for (DistanceKind kind : {DistanceKind::squared, DistanceKind::normalized}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd a = randn_vec(5, rng);
      const Eigen::VectorXd p = randn_vec(5, rng);
      const Eigen::MatrixXd negs = randn(1 + static_cast<Index>(uniform_index(rng, 4)), 5, rng);
      const double tau = 0.1 + uniform01(rng);
      EXPECT_NEAR(info_nce(a, p, negs, config(kind, tau)).value,
                  brute_info_nce(a, p, negs, tau, kind == DistanceKind::normalized), 1e-12);
    }
  }
}

TEST(InfoNce, EmptyNegativesRejected) {
  const Eigen::Vector2d a(1.0, 0.0);
  EXPECT_THROW((void)info_nce(a, a, Eigen::MatrixXd(0, 2), config(DistanceKind::squared)), std::invalid_argument);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(2);
  for (DistanceKind kind : {DistanceKind::squared, DistanceKind::normalized}) {
    const ContrastiveConfig cfg = config(kind, 0.7);
    const Eigen::VectorXd a = randn_vec(4, rng);
    const Eigen::VectorXd p = randn_vec(4, rng);
    const Eigen::MatrixXd negs = randn(3, 4, rng);
    const InfoNceResult r = info_nce(a, p, negs, cfg);
    const Eigen::VectorXd ga = numeric_grad([&](const Eigen::VectorXd& x) { return info_nce(x, p, negs, cfg).value; }, a);
    const Eigen::VectorXd gp = numeric_grad([&](const Eigen::VectorXd& x) { return info_nce(a, x, negs, cfg).value; }, p);
    EXPECT_LT((r.grad_anchor - ga).norm(), 1e-7 * (1.0 + ga.norm()));
    EXPECT_LT((r.grad_positive - gp).norm(), 1e-7 * (1.0 + gp.norm()));
    for (Index j = 0; j < negs.rows(); ++j) {
      const Eigen::VectorXd gn = numeric_grad(
          [&](const Eigen::VectorXd& x) {
            Eigen::MatrixXd n2 = negs;
            n2.row(j) = x.transpose();
            return info_nce(a, p, n2, cfg).value;
          },
          negs.row(j).transpose());
      EXPECT_LT((r.grad_negatives.row(j).transpose() - gn).norm(), 1e-7 * (1.0 + gn.norm()));
    }
  }
}

TEST(InfoNce, ProjectionHeadGradients) {
  Rng rng = make_rng(3);
  MlpConfig hc;
  hc.dims = {4, 6, 3};
  MlpNet head(hc, rng);
  ContrastiveConfig cfg = config(DistanceKind::squared, 0.6);
  cfg.use_projection = true;
  const Eigen::VectorXd a = randn_vec(4, rng);
  const Eigen::VectorXd p = randn_vec(4, rng);
  const Eigen::MatrixXd negs = randn(2, 4, rng);
  Eigen::VectorXd g_head;
  const InfoNceResult r = info_nce(a, p, negs, cfg, head, &g_head);

  const auto project = [&](const MlpNet& h, const Eigen::VectorXd& x) {
    return Eigen::VectorXd(mlp_forward(h, x.transpose()).value.row(0).transpose());
  };
  Eigen::MatrixXd pn(2, 3);
  for (Index j = 0; j < 2; ++j) pn.row(j) = project(head, negs.row(j).transpose()).transpose();
  EXPECT_NEAR(r.value, brute_info_nce(project(head, a), project(head, p), pn, 0.6, false), 1e-12);

  const Eigen::VectorXd ga =
      numeric_grad([&](const Eigen::VectorXd& x) { return info_nce(x, p, negs, cfg, head, nullptr).value; }, a);
  EXPECT_LT((r.grad_anchor - ga).norm(), 1e-7 * (1.0 + ga.norm()));
  const Eigen::VectorXd gh = numeric_grad(
      [&](const Eigen::VectorXd& w) {
        MlpNet h2 = head;
        h2.mutable_params() = w;
        return info_nce(a, p, negs, cfg, h2, nullptr).value;
      },
      head.params());
  EXPECT_LT((g_head - gh).norm(), 1e-6 * (1.0 + gh.norm()));
}

TEST(InfoNceProperty, DecreasesAsPositiveApproaches) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd a = randn_vec(6, rng);
    const Eigen::VectorXd dir = randn_vec(6, rng);
    const Eigen::MatrixXd negs = randn(5, 6, rng);
    double prev = INFINITY;
    for (int k = 20; k >= 0; --k) {
      const double v = info_nce(a, Eigen::VectorXd(a + 0.1 * k * dir), negs, config(DistanceKind::squared)).value;
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
}

TEST(InfoNceProperty, NegativePermutationInvariant) {
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd a = randn_vec(5, rng);
    const Eigen::VectorXd p = randn_vec(5, rng);
    const Eigen::MatrixXd negs = randn(7, 5, rng);
    std::vector<Index> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle_in_place(perm, rng);
    Eigen::MatrixXd shuffled(7, 5);
    for (Index j = 0; j < 7; ++j) shuffled.row(j) = negs.row(perm[static_cast<std::size_t>(j)]);
    for (DistanceKind kind : {DistanceKind::squared, DistanceKind::normalized}) {
      EXPECT_NEAR(info_nce(a, p, negs, config(kind)).value, info_nce(a, p, shuffled, config(kind)).value, 1e-12);
    }
  }
}

TEST(InfoNceBatch, MeanOfPerAnchorLosses) {
  Rng rng = make_rng(6);
  const Eigen::MatrixXd anchors = randn(5, 3, rng);
  const Eigen::MatrixXd positives = randn(5, 3, rng);
  const Eigen::MatrixXd clean = randn(5, 3, rng);
  const ContrastiveConfig cfg = config(DistanceKind::squared);
  double expected = 0.0;
  for (Index i = 0; i < 5; ++i) {
    Eigen::MatrixXd negs(8, 3);
    Index r = 0;
    for (Index j = 0; j < 5; ++j) {
      if (j == i) continue;
      negs.row(r++) = clean.row(j);
      negs.row(r++) = positives.row(j);
    }
    expected += brute_info_nce(anchors.row(i).transpose(), positives.row(i).transpose(), negs, cfg.temperature, false);
  }
  const BatchInfoNce b = info_nce_batch(anchors, positives, clean, cfg);
  EXPECT_NEAR(b.value, expected / 5.0, 1e-12);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(clean.data(), clean.size());
  const Eigen::VectorXd g = numeric_grad(
      [&](const Eigen::VectorXd& x) {
        const Eigen::MatrixXd c = Eigen::Map<const Eigen::MatrixXd>(x.data(), 5, 3);
        return info_nce_batch(anchors, positives, c, cfg).value;
      },
      flat);
  EXPECT_LT((Eigen::Map<const Eigen::VectorXd>(b.grad_clean.data(), 15) - g).norm(), 1e-7);
}

ManifoldClrConfig small_model_config() {
  ManifoldClrConfig cfg;
  cfg.feature_dim = 4;
  cfg.num_ops = 2;
  cfg.block_size = 2;
  cfg.backbone_hidden = {8};
  cfg.encoder_hidden = {8};
  cfg.prior_hidden = {8};
  cfg.projection_hidden = {8};
  cfg.projection_dim = 3;
  return cfg;
}

ManifoldClrConfig disabled(ManifoldClrConfig cfg) {
  cfg.lambda_manifold = 0.0;
  cfg.variational.beta_kl = 0.0;
  cfg.contrastive.augment_source = AugmentSource::none;
  return cfg;
}

TEST(ManifoldClrStep, DisabledMachineryIsSimClr) {
  for (bool projection : {false, true}) {
    ManifoldClrConfig cfg = disabled(small_model_config());
    cfg.contrastive.use_projection = projection;
    Rng rng = make_rng(7);
    ManifoldClrModel a = make_manifoldclr_model(5, cfg, rng);
    ManifoldClrModel b = a;
    ManifoldClrOptimizers oa = make_manifoldclr_optimizers(cfg);
    ManifoldClrOptimizers ob = make_manifoldclr_optimizers(cfg);
    const Eigen::VectorXd dict_before = a.dict.flat();
    for (int it = 0; it < 5; ++it) {
      const Eigen::MatrixXd x1 = randn(6, 5, rng);
      const Eigen::MatrixXd x2 = x1 + randn(6, 5, rng, 0.1);
      const ClrLosses la = manifoldclr_step(a, oa, x1, x2, cfg, it, 99 + static_cast<std::uint64_t>(it));
      const ClrLosses lb = simclr_step(b, ob, x1, x2, cfg);
      EXPECT_EQ(la.total, lb.total);
      EXPECT_EQ(la.contrastive, lb.contrastive);
      EXPECT_EQ(la.manifold, 0.0);
      EXPECT_EQ(la.kl, 0.0);
      EXPECT_EQ(a.backbone.params(), b.backbone.params());
      if (projection) EXPECT_EQ(a.projection->params(), b.projection->params());
    }
    EXPECT_EQ(a.dict.flat(), dict_before);
  }
}

TEST(ManifoldClrStep, DisabledLossIsBatchInfoNce) {
  const ManifoldClrConfig cfg = disabled(small_model_config());
  Rng rng = make_rng(8);
  ManifoldClrModel model = make_manifoldclr_model(5, cfg, rng);
  ManifoldClrOptimizers opt = make_manifoldclr_optimizers(cfg);
  const Eigen::MatrixXd x1 = randn(6, 5, rng);
  const Eigen::MatrixXd x2 = randn(6, 5, rng);
  const Eigen::MatrixXd z1 = encode_features(model.backbone, x1);
  const Eigen::MatrixXd z2 = encode_features(model.backbone, x2);
  const double expected = info_nce_batch(z1, z2, z1, cfg.contrastive).value;
  EXPECT_NEAR(manifoldclr_step(model, opt, x1, x2, cfg, 0, 1).total, expected, 1e-12);
}

TEST(ManifoldClrStep, ZeroPriorGivesUnaugmentedFeatures) {
  ManifoldClrConfig cfg = disabled(small_model_config());
  cfg.contrastive.augment_source = AugmentSource::prior;
  cfg.fixed_prior = true;
  cfg.warmup.mu0 = 0.0;
  cfg.warmup.b0 = 0.0;
  Rng rng = make_rng(9);
  ManifoldClrModel a = make_manifoldclr_model(5, cfg, rng);
  ManifoldClrModel b = a;
  ManifoldClrOptimizers oa = make_manifoldclr_optimizers(cfg);
  ManifoldClrOptimizers ob = make_manifoldclr_optimizers(cfg);
  for (int it = 0; it < 3; ++it) {
    const Eigen::MatrixXd x1 = randn(6, 5, rng);
    const Eigen::MatrixXd x2 = randn(6, 5, rng);
    EXPECT_EQ(manifoldclr_step(a, oa, x1, x2, cfg, it, 5).contrastive, simclr_step(b, ob, x1, x2, cfg).contrastive);
    EXPECT_EQ(a.backbone.params(), b.backbone.params());
  }
}

TEST(ManifoldClrStep, FullSystemIsDeterministicAcrossWorkers) {
  ManifoldClrConfig cfg = small_model_config();
  Rng rng = make_rng(10);
  const ManifoldClrModel init = make_manifoldclr_model(5, cfg, rng);
  const Eigen::MatrixXd x1 = randn(8, 5, rng);
  const Eigen::MatrixXd x2 = x1 + randn(8, 5, rng, 0.1);
  std::vector<ManifoldClrModel> out;
  for (int workers : {1, 3}) {
    cfg.workers = workers;
    ManifoldClrModel m = init;
    ManifoldClrOptimizers opt = make_manifoldclr_optimizers(cfg);
    for (int it = 0; it < 3; ++it) (void)manifoldclr_step(m, opt, x1, x2, cfg, it, 17 + static_cast<std::uint64_t>(it));
    out.push_back(std::move(m));
  }
  EXPECT_EQ(out[0].backbone.params(), out[1].backbone.params());
  EXPECT_EQ(out[0].dict.flat(), out[1].dict.flat());
  EXPECT_EQ(out[0].encoder.params(), out[1].encoder.params());
  EXPECT_EQ(out[0].prior.params(), out[1].prior.params());
}

TEST(ManifoldClrStep, RejectsMismatchedViews) {
  const ManifoldClrConfig cfg = small_model_config();
  Rng rng = make_rng(11);
  ManifoldClrModel model = make_manifoldclr_model(5, cfg, rng);
  ManifoldClrOptimizers opt = make_manifoldclr_optimizers(cfg);
  EXPECT_THROW((void)manifoldclr_step(model, opt, randn(4, 5, rng), randn(3, 5, rng), cfg, 0, 0), std::invalid_argument);
  ManifoldClrConfig neg = cfg;
  neg.lambda_manifold = -1.0;
  EXPECT_THROW((void)manifoldclr_step(model, opt, randn(4, 5, rng), randn(4, 5, rng), neg, 0, 0), std::invalid_argument);
}

TEST(ManifoldClrToy, LossFallsOverFiftyIterations) {
  ManifoldClrToyExperiment exp;
  exp.iterations = 50;
  double first = 0.0;
  double last = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PretrainedToy toy = pretrain_toy(exp, "S0", seed, 1);
    ASSERT_EQ(toy.losses.size(), 50u);
    first += toy.losses.front().total / 3.0;
    last += toy.losses.back().total / 3.0;
  }
  EXPECT_LT(last, first);
}

std::vector<int> blob_labels(Index n, int k) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(i % k);
  return y;
}

TEST(LinearProbe, SeparableBlobs) {
  Rng rng = make_rng(12);
  const Index n = 400;
  const std::vector<int> y = blob_labels(n, 2);
  Eigen::MatrixXd x = randn(n, 3, rng, 0.3);
  for (Index i = 0; i < n; ++i) x(i, 0) += y[static_cast<std::size_t>(i)] == 0 ? -2.0 : 2.0;
  EXPECT_GT(linear_probe(x, y, LinearProbeConfig{}), 0.99);
}

TEST(LinearProbe, ShuffledLabelsNearChance) {
  Rng rng = make_rng(13);
  const Index n = 3000;
  const int k = 4;
  std::vector<int> y = blob_labels(n, k);
  Eigen::MatrixXd x = randn(n, 5, rng, 0.3);
  for (Index i = 0; i < n; ++i) x(i, y[static_cast<std::size_t>(i)]) += 2.0;
  LinearProbeConfig cfg;
  EXPECT_GT(linear_probe(x, y, cfg), 0.95);
  shuffle_in_place(y, rng);
  // 900 held-out points: one standard error of the chance rate is ~0.0144.
  EXPECT_NEAR(linear_probe(x, y, cfg), 1.0 / k, 0.06);
}

TEST(LinearProbe, DeterministicAndSingleClassRejected) {
  Rng rng = make_rng(14);
  const Eigen::MatrixXd x = randn(120, 4, rng);
  const std::vector<int> y = blob_labels(120, 3);
  LinearProbeConfig cfg;
  cfg.seed = 5;
  EXPECT_EQ(linear_probe(x, y, cfg), linear_probe(x, y, cfg));
  EXPECT_THROW((void)linear_probe(x, std::vector<int>(120, 2), cfg), std::invalid_argument);
}

}  // namespace
}  // namespace vlgo
