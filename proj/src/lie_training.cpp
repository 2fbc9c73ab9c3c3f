#include "vlgo/lie_training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vlgo/parallel.hpp"

namespace vlgo {

namespace {

struct PairResult {
  double loss = 0.0;
  double l1 = 0.0;
  double kl = 0.0;
  double di = 0.0;
  bool has_di = false;
  Eigen::VectorXd grad_ops;
  Eigen::VectorXd d_shift;
  Eigen::VectorXd d_scale;
};

LaplacianParams fixed_prior(const LieTrainConfig& cfg, Index m) {
  return LaplacianParams::constant(m, cfg.prior_shift, cfg.prior_scale);
}

void record_di(PairResult& r, const Eigen::VectorXd& z, const Eigen::VectorXd& target) {
  const double before = (target - z).squaredNorm();
  if (before > 0.0) {
    r.di = r.loss / before;
    r.has_di = true;
  }
}

}  // namespace

MlpNet make_coefficient_encoder(Index feature_dim, Index num_ops, const LieTrainConfig& cfg, Rng& rng) {
  MlpConfig mc;
  mc.dims.push_back(2 * feature_dim);
  for (Index h : cfg.encoder_hidden) mc.dims.push_back(h);
  mc.dims.push_back(2 * num_ops);
  mc.head = HeadType::laplacian;
  mc.output_init_scale = cfg.encoder_output_init_scale;
  MlpNet net(mc, rng);
  auto bias = net.bias(net.num_layers() - 1);
  bias.tail(num_ops).setConstant(cfg.encoder_init_log_scale);
  return net;
}

LieTrainResult train_lie_operators(const std::vector<PointPairBatch>& batches, OperatorDictionaryd dict,
                                   const LieTrainConfig& cfg) {
  if (batches.empty()) throw std::invalid_argument("train_lie_operators: no pair batches");
  if (cfg.epochs < 0) throw std::invalid_argument("train_lie_operators: epochs must be >= 0");
  if (!(cfg.fro_weight >= 0.0)) throw std::invalid_argument("train_lie_operators: fro_weight must be >= 0");
  if (!(cfg.prior_scale > 0.0)) throw std::invalid_argument("train_lie_operators: prior_scale must be > 0");
  for (const auto& b : batches) {
    if (b.size() < 1 || b.sources.cols() != dict.dim() || b.targets.rows() != b.sources.rows() ||
        b.targets.cols() != dict.dim()) {
      throw std::invalid_argument("train_lie_operators: batch shape does not match the dictionary");
    }
  }
  const bool variational = cfg.inference == InferenceKind::variational;
  if (variational) validate(cfg.variational);

  const auto start = std::chrono::steady_clock::now();
  const Index m = dict.size();
  LieTrainResult res;
  Rng init_rng = make_rng(cfg.seed, {0xe7c0});
  if (variational) res.encoder = make_coefficient_encoder(dict.dim(), m, cfg, init_rng);
  Optimizer dict_opt(cfg.dict_optimizer);
  Optimizer enc_opt(cfg.encoder_optimizer);
  const LaplacianParams prior = fixed_prior(cfg, m);

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const PointPairBatch& batch = batches[static_cast<std::size_t>(epoch) % batches.size()];
    const Index n = batch.size();
    std::vector<PairResult> pairs(static_cast<std::size_t>(n));

    std::optional<PosteriorEncoding> enc;
    if (variational) enc = encode_posterior(*res.encoder, batch.sources, batch.targets, cfg.encoder_input_scale);

    parallel_for(static_cast<std::size_t>(n), cfg.workers, [&](std::size_t i) {
      const auto row = static_cast<Index>(i);
      const Eigen::VectorXd z = batch.sources.row(row).transpose();
      const Eigen::VectorXd target = batch.targets.row(row).transpose();
      PairResult& r = pairs[i];
      Eigen::VectorXd c;
      if (!variational) {
        c = fista_infer(dict, z, target, cfg.fista).c;
      } else {
        Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(epoch), i});
        const LaplacianParams q = enc->params.row(row);
        BestOfMany best = best_of_many(dict, z, target, q, cfg.variational, rng);
        c = best.c;
        const ManifoldLoss<double> ml = manifold_loss(dict, z, target, c, true);
        const LaplacianGrad rg = reparam_backward(best.sample, ml.grad_c);
        const KlResult kl = kl_laplacian(q, prior);
        r.kl = kl.value;
        r.d_shift = rg.shift + cfg.variational.beta_kl * kl.q.shift;
        r.d_scale = rg.scale + cfg.variational.beta_kl * kl.q.scale;
        r.loss = ml.value;
        r.grad_ops = ml.grad_ops.flat();
      }
      if (!variational) {
        const ManifoldLoss<double> ml = manifold_loss(dict, z, target, c, true);
        r.loss = ml.value;
        r.grad_ops = ml.grad_ops.flat();
      }
      r.l1 = c.lpNorm<1>();
      record_di(r, z, target);
    });

    // Index-ordered reduction keeps results independent of the worker count.
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd grad_ops = Eigen::VectorXd::Zero(dict.num_params());
    Eigen::MatrixXd d_shift;
    Eigen::MatrixXd d_scale;
    if (variational) {
      d_shift.resize(n, m);
      d_scale.resize(n, m);
    }
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    Index di_count = 0;
    for (Index i = 0; i < n; ++i) {
      const PairResult& r = pairs[static_cast<std::size_t>(i)];
      grad_ops += r.grad_ops;
      rec.mse += r.loss;
      rec.l1 += r.l1;
      rec.kl += r.kl;
      if (r.has_di) {
        rec.di_mean += r.di;
        ++di_count;
      }
      if (variational) {
        d_shift.row(i) = inv_n * r.d_shift.transpose();
        d_scale.row(i) = inv_n * r.d_scale.transpose();
      }
    }
    rec.mse *= inv_n;
    rec.l1 *= inv_n;
    rec.kl *= inv_n;
    rec.di_mean = di_count > 0 ? rec.di_mean / static_cast<double>(di_count) : 0.0;
    if (!std::isfinite(rec.mse) || !std::isfinite(rec.kl) || !grad_ops.allFinite()) {
      throw DivergenceError("train_lie_operators: non-finite loss (mse " + format_double(rec.mse) + ", kl " +
                                format_double(rec.kl) + ")",
                            static_cast<std::size_t>(epoch));
    }

    Eigen::VectorXd params = dict.flat();
    grad_ops = inv_n * grad_ops + 2.0 * cfg.fro_weight * params;
    dict_opt.step(params, grad_ops);
    dict.assign_flat(params);
    if (variational) {
      const Eigen::VectorXd g = posterior_backward(*res.encoder, *enc, d_shift, d_scale);
      if (!g.allFinite()) {
        throw DivergenceError("train_lie_operators: non-finite encoder gradient", static_cast<std::size_t>(epoch));
      }
      enc_opt.step(res.encoder->mutable_params(), g);
    }
    const Eigen::VectorXd norms = operator_norms(dict);
    if (!dict.all_finite() || !norms.allFinite()) {
      throw DivergenceError("train_lie_operators: dictionary became non-finite", static_cast<std::size_t>(epoch));
    }
    rec.op_fro.assign(norms.data(), norms.data() + norms.size());
    if (cfg.record_runtime) {
      rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    res.records.push_back(std::move(rec));
  }
  res.dict = std::move(dict);
  res.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

Eigen::MatrixXd infer_coefficients(const LieTrainResult& model, const PointPairBatch& batch, const LieTrainConfig& cfg,
                                   std::uint64_t seed) {
  const Index n = batch.size();
  Eigen::MatrixXd out(n, model.dict.size());
  std::optional<PosteriorEncoding> enc;
  if (model.encoder) enc = encode_posterior(*model.encoder, batch.sources, batch.targets, cfg.encoder_input_scale);
  parallel_for(static_cast<std::size_t>(n), cfg.workers, [&](std::size_t i) {
    const auto row = static_cast<Index>(i);
    const Eigen::VectorXd z = batch.sources.row(row).transpose();
    const Eigen::VectorXd target = batch.targets.row(row).transpose();
    if (!model.encoder) {
      out.row(row) = fista_infer(model.dict, z, target, cfg.fista).c.transpose();
    } else {
      Rng rng = make_rng(seed, {i});
      out.row(row) = best_of_many(model.dict, z, target, enc->params.row(row), cfg.variational, rng).c.transpose();
    }
  });
  return out;
}

}  // namespace vlgo
