#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vlgo/networks.hpp"
#include "vlgo/optim.hpp"

namespace vlgo {
namespace {

using testing::numeric_grad;
using testing::randn;
using testing::randn_vec;
using testing::rel_err;

MlpConfig config(std::vector<Index> dims, HeadType head = HeadType::plain, double slope = 0.01) {
  MlpConfig c;
  c.dims = std::move(dims);
  c.head = head;
  c.negative_slope = slope;
  return c;
}

/// Scalar loops over every weight, written without matrix products.
Eigen::MatrixXd brute_forward(const MlpNet& net, const Eigen::MatrixXd& x) {
  const MlpConfig& cfg = net.config();
  Eigen::MatrixXd out(x.rows(), net.output_dim());
  for (Index r = 0; r < x.rows(); ++r) {
    std::vector<double> h;
    for (Index i = 0; i < x.cols(); ++i) h.push_back(x(r, i));
    for (Index l = 0; l < net.num_layers(); ++l) {
      const auto w = net.weight(l);
      const auto b = net.bias(l);
      std::vector<double> next(static_cast<std::size_t>(w.rows()));
      for (Index o = 0; o < w.rows(); ++o) {
        double s = b[o];
        for (Index i = 0; i < w.cols(); ++i) s += w(o, i) * h[static_cast<std::size_t>(i)];
        if (l + 1 < net.num_layers() && s < 0.0) s *= cfg.negative_slope;
        next[static_cast<std::size_t>(o)] = s;
      }
      h = std::move(next);
    }
    if (cfg.head == HeadType::laplacian) {
      const std::size_t m = h.size() / 2;
      for (std::size_t i = m; i < h.size(); ++i) h[i] = std::min(cfg.log_scale_max, std::max(cfg.log_scale_min, h[i]));
    } else if (cfg.head == HeadType::normalized) {
      double n = 0.0;
      for (double v : h) n += v * v;
      n = std::sqrt(n);
      for (double& v : h) v /= n;
    }
    for (std::size_t i = 0; i < h.size(); ++i) out(r, static_cast<Index>(i)) = h[i];
  }
  return out;
}

TEST(MlpForward, ZeroWeightsReturnBias) {
  MlpNet net(config({3, 4, 2}));
  net.bias(1) << 0.7, -1.5;
  const Eigen::MatrixXd out = mlp_forward(net, Eigen::MatrixXd::Ones(2, 3)).value;
  EXPECT_EQ(out(0, 0), 0.7);
  EXPECT_EQ(out(1, 1), -1.5);
}

TEST(MlpForward, ZeroSlopeZeroesNegativePreActivations) {
  MlpNet net(config({1, 2, 2}, HeadType::plain, 0.0));
  net.weight(0) << 1.0, -1.0;
  net.weight(1).setIdentity();
  const Eigen::MatrixXd out = mlp_forward(net, Eigen::MatrixXd::Constant(1, 1, 2.0)).value;
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(0, 1), 0.0);
}

TEST(MlpForward, MatchesBruteForceForEveryHead) {
  Rng rng = make_rng(1);
  for (HeadType head : {HeadType::plain, HeadType::laplacian, HeadType::normalized}) {
    const MlpNet net(config({5, 8, 7, 6}, head), rng);
    const Eigen::MatrixXd x = randn(4, 5, rng);
    EXPECT_LT((mlp_forward(net, x).value - brute_forward(net, x)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  Rng rng = make_rng(2);
  const MlpNet net(config({3, 4, 2}), rng);
  EXPECT_THROW((void)mlp_forward(net, Eigen::MatrixXd::Zero(1, 4)), std::invalid_argument);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng = make_rng(3);
  const MlpNet net(config({3, 5, 2}), rng);
  const MlpOutput fw = mlp_forward(net, randn(4, 3, rng));
  const MlpGrad g = mlp_backward(net, fw.cache, Eigen::MatrixXd::Zero(4, 2));
  EXPECT_EQ(g.params.norm(), 0.0);
  EXPECT_EQ(g.input.norm(), 0.0);
}

TEST(MlpBackward, LinearNetInputGradientIsWeightTranspose) {
  Rng rng = make_rng(4);
  const MlpNet net(config({4, 3}), rng);
  const Eigen::MatrixXd up = randn(1, 3, rng);
  const MlpOutput fw = mlp_forward(net, randn(1, 4, rng));
  const Eigen::VectorXd want = net.weight(0).transpose() * up.transpose();
  EXPECT_LT((mlp_backward(net, fw.cache, up).input.transpose() - want).norm(), 1e-14);
}

TEST(MlpBackward, ScalarNetMatchesFiniteDifferences) {
  Rng rng = make_rng(5);
  const MlpNet net(config({1, 4, 1}), rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.37);
  const MlpGrad g = mlp_backward(net, mlp_forward(net, x).cache, Eigen::MatrixXd::Ones(1, 1));
  const auto f = [&](const Eigen::VectorXd& p) {
    MlpNet n = net;
    n.set_params(p);
    return mlp_forward(n, x).value(0, 0);
  };
  EXPECT_LT(rel_err(g.params, numeric_grad(f, net.params())), 1e-6);
}

TEST(MlpBackward, StaleCacheRejected) {
  Rng rng = make_rng(6);
  MlpNet net(config({2, 3, 2}), rng);
  const MlpOutput fw = mlp_forward(net, randn(1, 2, rng));
  net.mutable_params()[0] += 1.0;
  EXPECT_THROW((void)mlp_backward(net, fw.cache, Eigen::MatrixXd::Ones(1, 2)), InvalidStateError);
  const MlpNet other(config({2, 3, 2}), rng);
  EXPECT_THROW((void)mlp_backward(other, fw.cache, Eigen::MatrixXd::Ones(1, 2)), InvalidStateError);
}

// Random small nets, every head, h = 1e-5.
TEST(MlpBackwardProperty, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 15; ++trial) {
    const HeadType head = static_cast<HeadType>(trial % 3);
    const Index in = 2 + static_cast<Index>(uniform_index(rng, 4));
    const Index hid = 2 + static_cast<Index>(uniform_index(rng, 6));
    const Index out = 2 * (1 + static_cast<Index>(uniform_index(rng, 3)));
    const MlpNet net(config({in, hid, hid, out}, head), rng);
    const Eigen::MatrixXd x = randn(3, in, rng);
    const Eigen::MatrixXd w = randn(3, out, rng);
    const MlpGrad g = mlp_backward(net, mlp_forward(net, x).cache, w);
    const auto f_params = [&](const Eigen::VectorXd& p) {
      MlpNet n = net;
      n.set_params(p);
      return (mlp_forward(n, x).value.array() * w.array()).sum();
    };
    const auto f_input = [&](const Eigen::VectorXd& v) {
      const Eigen::MatrixXd xx = Eigen::Map<const Eigen::MatrixXd>(v.data(), x.rows(), x.cols());
      return (mlp_forward(net, xx).value.array() * w.array()).sum();
    };
    const Eigen::VectorXd xflat = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    const Eigen::VectorXd gin = Eigen::Map<const Eigen::VectorXd>(g.input.data(), g.input.size());
    EXPECT_LT(rel_err(g.params, numeric_grad(f_params, net.params(), 1e-5)), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_err(gin, numeric_grad(f_input, xflat, 1e-5)), 1e-4) << "trial " << trial;
  }
}

TEST(LaplacianHeadProperty, LogScaleStaysClampedAfterUpdates) {
  Rng rng = make_rng(8);
  MlpConfig cfg = config({3, 6, 4}, HeadType::laplacian);
  MlpNet net(cfg, rng);
  Optimizer opt(OptimizerConfig{OptimizerKind::adamw, 1.0, 0.0, 0.0});
  for (int step = 0; step < 50; ++step) {
    const Eigen::MatrixXd x = randn(8, 3, rng, 3.0);
    const MlpOutput fw = mlp_forward(net, x);
    const Eigen::MatrixXd logs = fw.value.rightCols(2);
    EXPECT_GE(logs.minCoeff(), cfg.log_scale_min);
    EXPECT_LE(logs.maxCoeff(), cfg.log_scale_max);
    opt.step(net.mutable_params(), randn_vec(net.num_params(), rng, 10.0));
  }
}

TEST(EncodePosterior, OutputShapeAndDeterminism) {
  Rng rng = make_rng(9);
  for (Index m : {1, 3, 6}) {
    const MlpNet enc(config({8, 5, 2 * m}, HeadType::laplacian), rng);
    const Eigen::MatrixXd z = randn(2, 4, rng);
    const Eigen::MatrixXd t = randn(2, 4, rng);
    const PosteriorEncoding a = encode_posterior(enc, z, t);
    const PosteriorEncoding b = encode_posterior(enc, z, t);
    EXPECT_EQ(a.params.shift.cols(), m);
    EXPECT_EQ(a.params.scale.cols(), m);
    EXPECT_EQ(a.params.shift, b.params.shift);
    EXPECT_EQ(a.params.scale, b.params.scale);
    EXPECT_GT(a.params.scale.minCoeff(), 0.0);
  }
}

TEST(EncodePosterior, DetachContract) {
  Rng rng = make_rng(10);
  const MlpNet enc(config({6, 5, 4}, HeadType::laplacian), rng);
  const Eigen::MatrixXd z = randn(1, 3, rng);
  const Eigen::MatrixXd t = randn(1, 3, rng);
  const PosteriorEncoding a = encode_posterior(enc, z, t);
  Eigen::MatrixXd z2 = z;
  z2(0, 0) += 0.5;
  EXPECT_NE(encode_posterior(enc, z2, t).params.shift, a.params.shift);
  // The only gradient produced is with respect to the encoder parameters.
  const Eigen::VectorXd g = posterior_backward(enc, a, Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Ones(1, 2));
  EXPECT_EQ(g.size(), enc.num_params());
  EXPECT_THROW((void)encode_posterior(enc, z, randn(1, 2, rng)), std::invalid_argument);
}

TEST(EncodePrior, WarmupBlend) {
  Rng rng = make_rng(11);
  const MlpNet prior(config({3, 5, 4}, HeadType::laplacian), rng);
  const Eigen::MatrixXd z = randn(2, 3, rng);
  const WarmupSchedule sched;
  EXPECT_EQ(sched.total_iters, 5000);
  EXPECT_EQ(sched.mu0, 0.05);
  EXPECT_EQ(sched.b0, 0.01);
  const PriorEncoding at0 = encode_prior(prior, z, sched, 0);
  EXPECT_TRUE((at0.params.shift.array() == 0.05).all());
  EXPECT_TRUE((at0.params.scale.array() == 0.01).all());
  const LaplacianBatch raw = laplacian_from_output(mlp_forward(prior, z).value);
  const PriorEncoding done = encode_prior(prior, z, sched, 5000);
  EXPECT_EQ(done.params.shift, raw.shift);
  EXPECT_EQ(done.params.scale, raw.scale);
  const PriorEncoding mid = encode_prior(prior, z, sched, 1250);
  const Eigen::MatrixXd want = (0.25 * raw.shift.array() + 0.75 * 0.05).matrix();
  EXPECT_LT((mid.params.shift - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ema, DecayBehaviour) {
  Rng rng = make_rng(12);
  const MlpNet a(config({2, 3, 2}), rng);
  const MlpNet b(config({2, 3, 2}), rng);
  EXPECT_EQ(ema_update(ema_init(a, 0.0), b).shadow, b.params());
  EXPECT_EQ(EmaState{}.decay, 0.999);
  EmaState ema = ema_init(a, 0.9);
  for (int k = 1; k <= 20; ++k) {
    ema = ema_update(ema, b);
    const double gap = (ema.shadow - b.params()).norm();
    EXPECT_NEAR(gap, std::pow(0.9, k) * (a.params() - b.params()).norm(), 1e-12);
  }
  EXPECT_EQ(ema_network(ema, a).params(), ema.shadow);
  const MlpNet small(config({2, 2}), rng);
  EXPECT_THROW((void)ema_update(ema, small), std::invalid_argument);
}

TEST(CrossEntropy, ValueAndGradient) {
  Rng rng = make_rng(13);
  const Eigen::MatrixXd logits = randn(4, 3, rng);
  const std::vector<int> labels{0, 2, 1, 2};
  const std::vector<bool> mask{true, false, true, true};
  const CrossEntropy ce = cross_entropy(logits, labels, 2.0, &mask);
  double want = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double lse = std::log(logits.row(i).array().exp().sum());
    want += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(ce.value, want / 2.0, 1e-14);
  const auto f = [&](const Eigen::VectorXd& v) {
    return cross_entropy(Eigen::Map<const Eigen::MatrixXd>(v.data(), 4, 3), labels, 2.0, &mask).value;
  };
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(logits.data(), logits.size());
  EXPECT_LT(rel_err(Eigen::Map<const Eigen::VectorXd>(ce.grad.data(), ce.grad.size()), numeric_grad(f, flat)), 1e-7);
  EXPECT_EQ(ce.grad.row(1).norm(), 0.0);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng = make_rng(14);
  const Eigen::MatrixXd logits = randn(3, 5, rng, 50.0);
  const Eigen::MatrixXd p = softmax_rows(logits);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-14);
  EXPECT_LT((softmax_rows((logits.array() + 1000.0).matrix()) - p).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace vlgo
