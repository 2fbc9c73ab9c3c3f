#include "vlgo/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "vlgo/parallel.hpp"

namespace vlgo {

namespace {

void check_temperature(const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("info_nce: temperature must be > 0");
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

// Cotangent of v given the cotangent of v / |v|.
Eigen::VectorXd unnormalize_grad(const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
  const double n = v.norm();
  if (n == 0.0) return g;
  const Eigen::VectorXd y = v / n;
  return (g - g.dot(y) * y) / n;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

Eigen::MatrixXd unnormalize_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& g) {
  Eigen::MatrixXd out(g.rows(), g.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    out.row(i) = unnormalize_grad(x.row(i).transpose(), g.row(i).transpose()).transpose();
  }
  return out;
}

// InfoNCE on already-transformed features with squared distances.
InfoNceResult info_nce_squared(const Eigen::VectorXd& a, const Eigen::VectorXd& p, const Eigen::MatrixXd& negs,
                               double tau) {
  const Index k = negs.rows();
  Eigen::VectorXd logits(k + 1);
  logits[0] = -(a - p).squaredNorm() / tau;
  for (Index j = 0; j < k; ++j) logits[j + 1] = -(a - negs.row(j).transpose()).squaredNorm() / tau;
  const double mx = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  const double sum = e.sum();
  InfoNceResult r;
  r.value = mx == logits[0] ? std::log1p(e.tail(k).sum()) : std::log(sum) + mx - logits[0];
  Eigen::VectorXd g_logit = e / sum;
  g_logit[0] -= 1.0;
  // d logit / d D = -1 / tau, and dD/da = 2 (a - b).
  r.grad_anchor = Eigen::VectorXd::Zero(a.size());
  const double gp = -g_logit[0] / tau;
  r.grad_anchor += 2.0 * gp * (a - p);
  r.grad_positive = -2.0 * gp * (a - p);
  r.grad_negatives.resize(k, a.size());
  for (Index j = 0; j < k; ++j) {
    const double gd = -g_logit[j + 1] / tau;
    const Eigen::VectorXd diff = a - negs.row(j).transpose();
    r.grad_anchor += 2.0 * gd * diff;
    r.grad_negatives.row(j) = -2.0 * gd * diff.transpose();
  }
  return r;
}

double adam_lr(const LinearProbeConfig& cfg, int epoch) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

struct ContrastiveGrads {
  double value = 0.0;
  Eigen::MatrixXd d_anchor;
  Eigen::MatrixXd d_positive;
  Eigen::MatrixXd d_clean;
  Eigen::VectorXd d_projection;
};

// InfoNCE over the batch, through the projection head when configured.
ContrastiveGrads contrastive_terms(const ManifoldClrModel& model, const ContrastiveConfig& cfg,
                                   const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                                   const Eigen::MatrixXd& clean) {
  ContrastiveGrads out;
  if (!cfg.use_projection) {
    BatchInfoNce b = info_nce_batch(anchors, positives, clean, cfg);
    out.value = b.value;
    out.d_anchor = std::move(b.grad_anchors);
    out.d_positive = std::move(b.grad_positives);
    out.d_clean = std::move(b.grad_clean);
    return out;
  }
  if (!model.projection) throw std::invalid_argument("manifoldclr: use_projection set but the model has no head");
  const MlpNet& head = *model.projection;
  const Index n = anchors.rows();
  Eigen::MatrixXd stacked(3 * n, anchors.cols());
  stacked << anchors, positives, clean;
  MlpOutput fw = mlp_forward(head, stacked);
  BatchInfoNce b = info_nce_batch(fw.value.topRows(n), fw.value.middleRows(n, n), fw.value.bottomRows(n), cfg);
  Eigen::MatrixXd up(3 * n, fw.value.cols());
  up << b.grad_anchors, b.grad_positives, b.grad_clean;
  MlpGrad g = mlp_backward(head, fw.cache, up);
  out.value = b.value;
  out.d_anchor = g.input.topRows(n);
  out.d_positive = g.input.middleRows(n, n);
  out.d_clean = g.input.bottomRows(n);
  out.d_projection = std::move(g.params);
  return out;
}

void require_finite(const ClrLosses& l, Index iter) {
  if (std::isfinite(l.total)) return;
  throw DivergenceError("manifoldclr_step: non-finite loss (contrastive " + std::to_string(l.contrastive) +
                            ", manifold " + std::to_string(l.manifold) + ", kl " + std::to_string(l.kl) + ")",
                        static_cast<std::size_t>(std::max<Index>(iter, 0)));
}

}  // namespace

InfoNceResult info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                       const Eigen::MatrixXd& negatives, const ContrastiveConfig& cfg) {
  check_temperature(cfg);
  if (negatives.rows() < 1) throw std::invalid_argument("info_nce: need at least one negative");
  if (positive.size() != anchor.size() || negatives.cols() != anchor.size()) {
    throw std::invalid_argument("info_nce: feature dims differ");
  }
  if (cfg.distance == DistanceKind::squared) return info_nce_squared(anchor, positive, negatives, cfg.temperature);
  InfoNceResult r =
      info_nce_squared(normalized(anchor), normalized(positive), normalize_rows(negatives), cfg.temperature);
  r.grad_anchor = unnormalize_grad(anchor, r.grad_anchor);
  r.grad_positive = unnormalize_grad(positive, r.grad_positive);
  r.grad_negatives = unnormalize_rows(negatives, r.grad_negatives);
  return r;
}

InfoNceResult info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                       const Eigen::MatrixXd& negatives, const ContrastiveConfig& cfg, const MlpNet& head,
                       Eigen::VectorXd* grad_head) {
  if (negatives.rows() < 1) throw std::invalid_argument("info_nce: need at least one negative");
  const Index k = negatives.rows();
  Eigen::MatrixXd stacked(k + 2, anchor.size());
  stacked.row(0) = anchor.transpose();
  stacked.row(1) = positive.transpose();
  stacked.bottomRows(k) = negatives;
  MlpOutput fw = mlp_forward(head, stacked);
  InfoNceResult r = info_nce(fw.value.row(0).transpose(), fw.value.row(1).transpose(), fw.value.bottomRows(k), cfg);
  Eigen::MatrixXd up(k + 2, fw.value.cols());
  up.row(0) = r.grad_anchor.transpose();
  up.row(1) = r.grad_positive.transpose();
  up.bottomRows(k) = r.grad_negatives;
  MlpGrad g = mlp_backward(head, fw.cache, up);
  if (grad_head) *grad_head = g.params;
  r.grad_anchor = g.input.row(0).transpose();
  r.grad_positive = g.input.row(1).transpose();
  r.grad_negatives = g.input.bottomRows(k);
  return r;
}

BatchInfoNce info_nce_batch(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                            const Eigen::MatrixXd& clean, const ContrastiveConfig& cfg) {
  check_temperature(cfg);
  const Index n = anchors.rows();
  const Index d = anchors.cols();
  if (n < 2) throw std::invalid_argument("info_nce_batch: need at least two pairs for in-batch negatives");
  if (positives.rows() != n || clean.rows() != n || positives.cols() != d || clean.cols() != d) {
    throw std::invalid_argument("info_nce_batch: shape mismatch");
  }
  const bool norm = cfg.distance == DistanceKind::normalized;
  const Eigen::MatrixXd a = norm ? normalize_rows(anchors) : anchors;
  const Eigen::MatrixXd p = norm ? normalize_rows(positives) : positives;
  const Eigen::MatrixXd c = norm ? normalize_rows(clean) : clean;

  BatchInfoNce out;
  out.grad_anchors = Eigen::MatrixXd::Zero(n, d);
  out.grad_positives = Eigen::MatrixXd::Zero(n, d);
  out.grad_clean = Eigen::MatrixXd::Zero(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd negs(2 * (n - 1), d);
  for (Index i = 0; i < n; ++i) {
    Index r = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) negs.row(r++) = c.row(j);
    }
    for (Index j = 0; j < n; ++j) {
      if (j != i) negs.row(r++) = p.row(j);
    }
    const InfoNceResult res = info_nce_squared(a.row(i).transpose(), p.row(i).transpose(), negs, cfg.temperature);
    out.value += inv_n * res.value;
    out.grad_anchors.row(i) += inv_n * res.grad_anchor.transpose();
    out.grad_positives.row(i) += inv_n * res.grad_positive.transpose();
    r = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) out.grad_clean.row(j) += inv_n * res.grad_negatives.row(r++);
    }
    for (Index j = 0; j < n; ++j) {
      if (j != i) out.grad_positives.row(j) += inv_n * res.grad_negatives.row(r++);
    }
  }
  if (norm) {
    out.grad_anchors = unnormalize_rows(anchors, out.grad_anchors);
    out.grad_positives = unnormalize_rows(positives, out.grad_positives);
    out.grad_clean = unnormalize_rows(clean, out.grad_clean);
  }
  return out;
}

ManifoldClrModel make_manifoldclr_model(Index input_dim, const ManifoldClrConfig& cfg, Rng& rng) {
  auto dims = [](Index in, const std::vector<Index>& hidden, Index out) {
    std::vector<Index> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  };
  MlpConfig bb;
  bb.dims = dims(input_dim, cfg.backbone_hidden, cfg.feature_dim);
  MlpConfig enc;
  enc.dims = dims(2 * cfg.feature_dim, cfg.encoder_hidden, 2 * cfg.num_ops);
  enc.head = HeadType::laplacian;
  enc.output_init_scale = cfg.coefficient_init_scale;
  MlpConfig pr;
  pr.dims = dims(cfg.feature_dim, cfg.prior_hidden, 2 * cfg.num_ops);
  pr.head = HeadType::laplacian;
  pr.output_init_scale = cfg.coefficient_init_scale;

  ManifoldClrModel model{MlpNet(bb, rng), init_dictionary(cfg.num_ops, cfg.feature_dim, cfg.block_size,
                                                          cfg.dict_init, rng),
                         MlpNet(enc, rng), MlpNet(pr, rng), std::nullopt};
  // Start both coefficient distributions at the warm-up scale.
  const double log_b0 = std::log(cfg.warmup.b0);
  model.encoder.bias(model.encoder.num_layers() - 1).tail(cfg.num_ops).setConstant(log_b0);
  model.prior.bias(model.prior.num_layers() - 1).tail(cfg.num_ops).setConstant(log_b0);
  if (cfg.contrastive.use_projection) {
    MlpConfig pj;
    pj.dims = dims(cfg.feature_dim, cfg.projection_hidden, cfg.projection_dim);
    model.projection = MlpNet(pj, rng);
  }
  return model;
}

ManifoldClrOptimizers make_manifoldclr_optimizers(const ManifoldClrConfig& cfg) {
  return {Optimizer(cfg.backbone_optimizer), Optimizer(cfg.projection_optimizer), Optimizer(cfg.dict_optimizer),
          Optimizer(cfg.encoder_optimizer), Optimizer(cfg.prior_optimizer)};
}

Eigen::MatrixXd encode_features(const MlpNet& backbone, const Eigen::MatrixXd& x) {
  return mlp_forward(backbone, x).value;
}

ClrLosses simclr_step(ManifoldClrModel& model, ManifoldClrOptimizers& opt, const Eigen::MatrixXd& x1,
                      const Eigen::MatrixXd& x2, const ManifoldClrConfig& cfg) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) throw std::invalid_argument("simclr_step: view shapes differ");
  const MlpOutput f1 = mlp_forward(model.backbone, x1);
  const MlpOutput f2 = mlp_forward(model.backbone, x2);
  ContrastiveGrads ct = contrastive_terms(model, cfg.contrastive, f1.value, f2.value, f1.value);
  ClrLosses losses{ct.value, ct.value, 0.0, 0.0};
  require_finite(losses, 0);
  const Eigen::MatrixXd dz = ct.d_anchor + ct.d_clean;
  Eigen::VectorXd g = mlp_backward(model.backbone, f1.cache, dz).params;
  g += mlp_backward(model.backbone, f2.cache, ct.d_positive).params;
  opt.backbone.step(model.backbone.mutable_params(), std::move(g));
  if (cfg.contrastive.use_projection) opt.projection.step(model.projection->mutable_params(), ct.d_projection);
  return losses;
}

ClrLosses manifoldclr_step(ManifoldClrModel& model, ManifoldClrOptimizers& opt, const Eigen::MatrixXd& x1,
                           const Eigen::MatrixXd& x2, const ManifoldClrConfig& cfg, Index iter,
                           std::uint64_t step_seed) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) {
    throw std::invalid_argument("manifoldclr_step: view shapes differ");
  }
  if (!(cfg.lambda_manifold >= 0.0)) throw std::invalid_argument("manifoldclr_step: lambda must be >= 0");
  validate(cfg.variational);
  const double lambda = cfg.lambda_manifold;
  const double beta = cfg.variational.beta_kl;
  const AugmentSource aug = cfg.contrastive.augment_source;
  const Index n = x1.rows();
  const Index m = model.dict.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  const MlpOutput f1 = mlp_forward(model.backbone, x1);
  const MlpOutput f2 = mlp_forward(model.backbone, x2);
  const Eigen::MatrixXd& z = f1.value;
  const Eigen::MatrixXd& z2 = f2.value;

  const bool need_posterior = lambda > 0.0 || beta > 0.0 || aug == AugmentSource::encoder;
  const bool need_prior = beta > 0.0 || aug == AugmentSource::prior;
  const bool learned_prior = need_prior && !cfg.fixed_prior;
  std::optional<PosteriorEncoding> post;
  if (need_posterior) post = encode_posterior(model.encoder, z, z2);
  std::optional<PriorEncoding> prior_enc;
  LaplacianBatch prior_params;
  if (learned_prior) {
    prior_enc = encode_prior(model.prior, z, cfg.warmup, iter);
    prior_params = prior_enc->params;
  } else if (need_prior) {
    prior_params = {Eigen::MatrixXd::Constant(n, m, cfg.warmup.mu0), Eigen::MatrixXd::Constant(n, m, cfg.warmup.b0)};
  }

  // Per-pair work writes only to row i of these buffers.
  Eigen::MatrixXd dz_m = Eigen::MatrixXd::Zero(n, z.cols());
  Eigen::MatrixXd dz2_m = Eigen::MatrixXd::Zero(n, z.cols());
  Eigen::MatrixXd enc_dshift = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd enc_dscale = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd pr_dshift = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd pr_dscale = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd z_aug = z;
  std::vector<Eigen::VectorXd> ops_grad(static_cast<std::size_t>(n));
  std::vector<BlockDiagMatrix<double>> aug_t(static_cast<std::size_t>(n));
  std::vector<double> lm(static_cast<std::size_t>(n), 0.0);
  std::vector<double> klv(static_cast<std::size_t>(n), 0.0);

  parallel_for(static_cast<std::size_t>(n), cfg.workers, [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    const Eigen::VectorXd zi = z.row(i).transpose();
    if (lambda > 0.0) {
      Rng rng = make_rng(step_seed, {ui, 0});
      const Eigen::VectorXd ti = z2.row(i).transpose();
      const LaplacianParams q = post->params.row(i);
      const BestOfMany best = best_of_many(model.dict, zi, ti, q, cfg.variational, rng);
      const ManifoldLoss<double> ml = manifold_loss(model.dict, zi, ti, best.c, cfg.stop_grad_target);
      lm[ui] = ml.value;
      const double w = lambda * inv_n;
      ops_grad[ui] = w * ml.grad_ops.flat();
      dz_m.row(i) = w * ml.grad_z.transpose();
      dz2_m.row(i) = w * ml.grad_target.transpose();
      const LaplacianGrad rg = reparam_backward(best.sample, ml.grad_c);
      enc_dshift.row(i) += w * rg.shift.transpose();
      enc_dscale.row(i) += w * rg.scale.transpose();
    }
    if (beta > 0.0) {
      const KlResult kl = kl_laplacian(post->params.row(i), prior_params.row(i));
      klv[ui] = kl.value;
      const double w = beta * inv_n;
      enc_dshift.row(i) += w * kl.q.shift.transpose();
      enc_dscale.row(i) += w * kl.q.scale.transpose();
      if (!cfg.kl_prior_stop_grad) {
        pr_dshift.row(i) += w * kl.p.shift.transpose();
        pr_dscale.row(i) += w * kl.p.scale.transpose();
      }
    }
    if (aug != AugmentSource::none) {
      Rng rng = make_rng(step_seed, {ui, 1});
      const LaplacianParams src = aug == AugmentSource::prior ? prior_params.row(i) : post->params.row(i);
      const LaplacianSample s = sample_laplacian(src, rng);
      const Eigen::VectorXd c = cfg.prior_threshold ? soft_threshold(s.value, cfg.variational.zeta) : s.value;
      aug_t[ui] = transport_matrix(model.dict, c);
      const Index b = model.dict.block_size();
      for (Index j = 0; j < model.dict.num_blocks(); ++j) {
        z_aug.row(i).segment(j * b, b) = (aug_t[ui].block(j) * zi.segment(j * b, b)).transpose();
      }
    }
  });

  ContrastiveGrads ct = contrastive_terms(model, cfg.contrastive, z_aug, z2, z);
  ClrLosses losses;
  losses.contrastive = ct.value;
  for (Index i = 0; i < n; ++i) {
    losses.manifold += inv_n * lm[static_cast<std::size_t>(i)];
    losses.kl += inv_n * klv[static_cast<std::size_t>(i)];
  }
  losses.total = losses.contrastive + lambda * losses.manifold + beta * losses.kl;
  require_finite(losses, iter);

  // The augmentation is a sampled transformation: its gradient reaches the
  // features through T^T only.
  Eigen::MatrixXd d_anchor = std::move(ct.d_anchor);
  if (aug != AugmentSource::none) {
    const Index b = model.dict.block_size();
    for (Index i = 0; i < n; ++i) {
      const auto& t = aug_t[static_cast<std::size_t>(i)];
      const Eigen::RowVectorXd g = d_anchor.row(i);
      for (Index j = 0; j < model.dict.num_blocks(); ++j) {
        d_anchor.row(i).segment(j * b, b) = g.segment(j * b, b) * t.block(j);
      }
    }
  }
  Eigen::MatrixXd dz = d_anchor + ct.d_clean;
  Eigen::MatrixXd dz2 = std::move(ct.d_positive);
  if (lambda > 0.0) {
    dz += dz_m;
    dz2 += dz2_m;
  }

  // All gradients are formed before any parameter changes.
  Eigen::VectorXd g_backbone = mlp_backward(model.backbone, f1.cache, dz).params;
  g_backbone += mlp_backward(model.backbone, f2.cache, dz2).params;
  Eigen::VectorXd g_dict;
  if (lambda > 0.0) {
    g_dict = Eigen::VectorXd::Zero(model.dict.num_params());
    for (const auto& g : ops_grad) g_dict += g;
  }
  Eigen::VectorXd g_enc;
  if (lambda > 0.0 || beta > 0.0) g_enc = posterior_backward(model.encoder, *post, enc_dshift, enc_dscale);
  Eigen::VectorXd g_prior;
  if (learned_prior && beta > 0.0 && !cfg.kl_prior_stop_grad) {
    g_prior = prior_backward(model.prior, *prior_enc, pr_dshift, pr_dscale);
  }

  opt.backbone.step(model.backbone.mutable_params(), std::move(g_backbone));
  if (cfg.contrastive.use_projection) opt.projection.step(model.projection->mutable_params(), ct.d_projection);
  if (g_dict.size() > 0) {
    Eigen::VectorXd params = model.dict.flat();
    opt.dict.step(params, std::move(g_dict));
    model.dict.assign_flat(params);
  }
  if (g_enc.size() > 0) opt.encoder.step(model.encoder.mutable_params(), std::move(g_enc));
  if (g_prior.size() > 0) opt.prior.step(model.prior.mutable_params(), std::move(g_prior));
  return losses;
}

double linear_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels, const LinearProbeConfig& cfg) {
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n) throw std::invalid_argument("linear_probe: label count mismatch");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw std::invalid_argument("linear_probe: test_fraction must lie in (0, 1)");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = make_rng(cfg.seed, {0x9b0e});
  shuffle_in_place(order, rng);
  const auto n_test = std::max<Index>(1, static_cast<Index>(std::llround(cfg.test_fraction * static_cast<double>(n))));
  const Index n_train = n - n_test;
  if (n_train < 1) throw std::invalid_argument("linear_probe: too few samples for a split");
  Eigen::MatrixXd tr(n_train, features.cols());
  Eigen::MatrixXd te(n_test, features.cols());
  std::vector<int> ytr;
  std::vector<int> yte;
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    if (k < n_train) {
      tr.row(k) = features.row(src);
      ytr.push_back(labels[static_cast<std::size_t>(src)]);
    } else {
      te.row(k - n_train) = features.row(src);
      yte.push_back(labels[static_cast<std::size_t>(src)]);
    }
  }
  return linear_probe(tr, ytr, te, yte, cfg);
}

double linear_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y, const Eigen::MatrixXd& test_x,
                    const std::vector<int>& test_y, const LinearProbeConfig& cfg) {
  if (static_cast<Index>(train_y.size()) != train_x.rows() || static_cast<Index>(test_y.size()) != test_x.rows()) {
    throw std::invalid_argument("linear_probe: label count mismatch");
  }
  if (train_x.cols() != test_x.cols()) throw std::invalid_argument("linear_probe: feature dims differ");
  if (test_x.rows() < 1) throw std::invalid_argument("linear_probe: empty test split");
  const std::set<int> classes(train_y.begin(), train_y.end());
  if (classes.size() < 2) throw std::invalid_argument("linear_probe: need at least two classes");
  if (*classes.begin() < 0) throw std::invalid_argument("linear_probe: labels must be non-negative");
  const int k = std::max(*classes.rbegin(), *std::max_element(test_y.begin(), test_y.end())) + 1;

  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(train_x.cols());
  Eigen::RowVectorXd sd = Eigen::RowVectorXd::Ones(train_x.cols());
  if (cfg.standardize) {
    mean = train_x.colwise().mean();
    const Eigen::MatrixXd c = train_x.rowwise() - mean;
    sd = (c.colwise().squaredNorm() / static_cast<double>(train_x.rows())).cwiseSqrt();
    for (Index j = 0; j < sd.size(); ++j) {
      if (!(sd[j] > 1e-12)) sd[j] = 1.0;
    }
  }
  const Eigen::MatrixXd xtr = (train_x.rowwise() - mean).array().rowwise() / sd.array();
  const Eigen::MatrixXd xte = (test_x.rowwise() - mean).array().rowwise() / sd.array();

  // A one-layer net gives the affine map and its gradient.
  MlpConfig mc;
  mc.dims = {train_x.cols(), k};
  MlpNet lin(mc);
  OptimizerConfig oc{OptimizerKind::adamw, cfg.lr_start, 0.0, 0.0};
  Optimizer opt(oc);
  for (int e = 0; e < cfg.epochs; ++e) {
    opt.set_learning_rate(adam_lr(cfg, e));
    const MlpOutput fw = mlp_forward(lin, xtr);
    const CrossEntropy ce = cross_entropy(fw.value, train_y, static_cast<double>(train_x.rows()));
    opt.step(lin.mutable_params(), mlp_backward(lin, fw.cache, ce.grad).params);
  }
  const Eigen::MatrixXd logits = mlp_forward(lin, xte).value;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == test_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace vlgo
