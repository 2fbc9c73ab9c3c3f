#include "vlgo/semisup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "vlgo/sparse_inference.hpp"

namespace vlgo {

namespace {

constexpr std::string_view kMethodNames[] = {"supervised", "pseudo_label", "mixup", "vlgo"};

/// sum_i mask_i * H(softmax(logits_i), targets_i) / normalizer for soft targets.
CrossEntropy soft_cross_entropy(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets,
                                const std::vector<bool>& mask, double normalizer) {
  CrossEntropy out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  const Eigen::MatrixXd p = softmax_rows(logits);
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double mx = logits.row(i).maxCoeff();
    const double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    out.value += targets.row(i).dot((lse - logits.row(i).array()).matrix()) / normalizer;
    out.grad.row(i) = (p.row(i) * targets.row(i).sum() - targets.row(i)) / normalizer;
  }
  return out;
}

std::vector<Index> draw_indices(Index pool, Index k, Rng& rng) {
  std::vector<Index> out(static_cast<std::size_t>(k));
  if (k > pool) {
    for (auto& v : out) v = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(pool)));
    return out;
  }
  // Partial Fisher-Yates: the first k slots of a random permutation.
  std::vector<Index> perm(static_cast<std::size_t>(pool));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(pool - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)];
  }
  return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, const std::vector<Index>& idx) {
  Eigen::MatrixXd out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

double accuracy(const MlpNet& net, const Eigen::MatrixXd& x, const std::vector<int>& y) {
  const Eigen::MatrixXd logits = mlp_forward(net, x).value;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

std::string_view to_string(SemiSupMethod m) noexcept { return kMethodNames[static_cast<int>(m)]; }

std::optional<SemiSupMethod> parse_semisup_method(std::string_view s) noexcept {
  for (int i = 0; i < 4; ++i) {
    if (kMethodNames[i] == s) return static_cast<SemiSupMethod>(i);
  }
  return std::nullopt;
}

void validate(const SemiSupConfig& cfg) {
  if (cfg.labeled_batch < 1 || cfg.unlabeled_batch < 1) {
    throw std::invalid_argument("semisup: batch sizes must be >= 1");
  }
  if (!(cfg.confidence > 0.0)) throw std::invalid_argument("semisup: confidence must be > 0");
  if (cfg.iterations < 0) throw std::invalid_argument("semisup: iterations must be >= 0");
  if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) throw std::invalid_argument("semisup: ema_decay must lie in [0, 1)");
  if (!(cfg.unlabeled_weight >= 0.0)) throw std::invalid_argument("semisup: unlabeled_weight must be >= 0");
  if (cfg.hidden < 1) throw std::invalid_argument("semisup: hidden width must be >= 1");
  if (!(cfg.zeta >= 0.0)) throw std::invalid_argument("semisup: zeta must be >= 0");
}

SemiSupLoss semisup_loss(const MlpNet& classifier, const MlpNet& pseudo_labeler, const SemiSupBatch& batch,
                         SemiSupMethod method, const SemiSupAugmenter& aug, const SemiSupConfig& cfg,
                         std::uint64_t seed) {
  const Index nl = batch.labeled.rows();
  const Index nu = batch.unlabeled.rows();
  const Index k = classifier.output_dim();
  if (nl < 1) throw std::invalid_argument("semisup_loss: empty labeled batch");
  if (static_cast<Index>(batch.labels.size()) != nl) throw std::invalid_argument("semisup_loss: label count mismatch");
  if (static_cast<Index>(batch.unlabeled_ids.size()) != nu) {
    throw std::invalid_argument("semisup_loss: unlabeled id count mismatch");
  }
  if (pseudo_labeler.output_dim() != k) throw std::invalid_argument("semisup_loss: pseudo-labeler class count differs");
  for (int y : batch.labels) {
    if (y < 0 || y >= k) throw std::invalid_argument("semisup_loss: label out of range for the classifier output");
  }
  if (method == SemiSupMethod::vlgo && (aug.dict == nullptr || aug.prior == nullptr)) {
    throw std::invalid_argument("semisup_loss: vlgo augmentation needs a dictionary and a prior network");
  }

  SemiSupLoss out;
  const MlpOutput fl = mlp_forward(classifier, batch.labeled);
  const CrossEntropy sup = cross_entropy(fl.value, batch.labels, static_cast<double>(nl));
  out.supervised = sup.value;
  out.grad = mlp_backward(classifier, fl.cache, sup.grad).params;
  out.total = sup.value;
  if (method == SemiSupMethod::supervised || nu == 0 || cfg.unlabeled_weight == 0.0) return out;

  const Eigen::MatrixXd q = softmax_rows(mlp_forward(pseudo_labeler, batch.unlabeled).value);
  std::vector<int> pseudo(static_cast<std::size_t>(nu));
  std::vector<bool> mask(static_cast<std::size_t>(nu));
  for (Index i = 0; i < nu; ++i) {
    Index arg = 0;
    const double conf = q.row(i).maxCoeff(&arg);
    pseudo[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    mask[static_cast<std::size_t>(i)] = conf >= cfg.confidence;
  }

  Eigen::MatrixXd z_aug = batch.unlabeled;
  Eigen::MatrixXd targets;
  if (method == SemiSupMethod::mixup) {
    Rng rng = make_rng(seed, {0x313});
    std::vector<Index> partner(static_cast<std::size_t>(nu));
    std::iota(partner.begin(), partner.end(), Index{0});
    shuffle_in_place(partner, rng);
    targets = Eigen::MatrixXd::Zero(nu, k);
    std::vector<bool> both(static_cast<std::size_t>(nu));
    for (Index i = 0; i < nu; ++i) {
      const Index j = partner[static_cast<std::size_t>(i)];
      const double lam = uniform01(rng);
      z_aug.row(i) = lam * batch.unlabeled.row(i) + (1.0 - lam) * batch.unlabeled.row(j);
      targets(i, pseudo[static_cast<std::size_t>(i)]) += lam;
      targets(i, pseudo[static_cast<std::size_t>(j)]) += 1.0 - lam;
      both[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(i)] && mask[static_cast<std::size_t>(j)];
    }
    mask = std::move(both);
  } else if (method == SemiSupMethod::vlgo) {
    const PriorEncoding prior = encode_prior(*aug.prior, batch.unlabeled, WarmupSchedule{0, 0.0, 1.0}, 0);
    for (Index i = 0; i < nu; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      Rng rng = make_rng(seed, {batch.unlabeled_ids[static_cast<std::size_t>(i)]});
      const LaplacianSample s = sample_laplacian(prior.params.row(i), rng);
      const Eigen::VectorXd c = cfg.prior_threshold ? soft_threshold(s.value, cfg.zeta) : s.value;
      z_aug.row(i) = transport(*aug.dict, c, Eigen::VectorXd(batch.unlabeled.row(i).transpose())).transpose();
    }
  }

  out.confident = static_cast<Index>(std::count(mask.begin(), mask.end(), true));
  if (out.confident == 0) return out;
  const double norm = static_cast<double>(out.confident);
  const MlpOutput fu = mlp_forward(classifier, z_aug);
  const CrossEntropy cons = method == SemiSupMethod::mixup ? soft_cross_entropy(fu.value, targets, mask, norm)
                                                           : cross_entropy(fu.value, pseudo, norm, &mask);
  out.consistency = cons.value;
  out.total += cfg.unlabeled_weight * cons.value;
  out.grad += cfg.unlabeled_weight * mlp_backward(classifier, fu.cache, cons.grad).params;
  return out;
}

std::vector<Index> LabelSplit::indices() const {
  std::vector<Index> out;
  for (const auto& c : per_class) out.insert(out.end(), c.begin(), c.end());
  return out;
}

LabelSplit make_label_split(const std::vector<int>& labels, int num_classes, Index per_class, std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1) throw std::invalid_argument("make_label_split: need >= 1 class and label");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw std::invalid_argument("make_label_split: label out of range");
    by_class[static_cast<std::size_t>(y)].push_back(static_cast<Index>(i));
  }
  LabelSplit split;
  Rng rng = make_rng(seed, {0x5e1});
  for (int c = 0; c < num_classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<Index>(pool.size()) < per_class) {
      throw std::invalid_argument("make_label_split: class " + std::to_string(c) + " has too few points");
    }
    shuffle_in_place(pool, rng);
    pool.resize(static_cast<std::size_t>(per_class));
    std::sort(pool.begin(), pool.end());
    split.per_class.push_back(pool);
  }
  return split;
}

SemiSupTrialResult run_semisup_trial(const SemiSupData& data, const LabelSplit& split, SemiSupMethod method,
                                     const SemiSupAugmenter& aug, const SemiSupConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const Index n = data.train.rows();
  if (static_cast<Index>(data.train_labels.size()) != n || static_cast<Index>(data.test_labels.size()) != data.test.rows()) {
    throw std::invalid_argument("run_semisup_trial: label count mismatch");
  }
  if (data.test.rows() < 1) throw std::invalid_argument("run_semisup_trial: empty test set");
  if (data.num_classes < 2) throw std::invalid_argument("run_semisup_trial: need at least two classes");
  if (static_cast<int>(split.per_class.size()) != data.num_classes) {
    throw std::invalid_argument("run_semisup_trial: split must list every class");
  }
  for (int c = 0; c < data.num_classes; ++c) {
    const auto& idx = split.per_class[static_cast<std::size_t>(c)];
    if (idx.empty()) throw std::invalid_argument("run_semisup_trial: class " + std::to_string(c) + " has no label");
    for (Index i : idx) {
      if (i < 0 || i >= n || data.train_labels[static_cast<std::size_t>(i)] != c) {
        throw std::invalid_argument("run_semisup_trial: split index " + std::to_string(i) + " is not of class " +
                                    std::to_string(c));
      }
    }
  }
  const std::vector<Index> labeled = split.indices();
  std::vector<int> labeled_y;
  for (Index i : labeled) labeled_y.push_back(data.train_labels[static_cast<std::size_t>(i)]);

  Rng init_rng = make_rng(seed, {0xc1f});
  MlpNet net(MlpConfig{{data.train.cols(), cfg.hidden, data.num_classes}}, init_rng);
  EmaState ema = ema_init(net, cfg.ema_decay);
  Optimizer opt(cfg.optimizer);
  Rng batch_rng = make_rng(seed, {0xba7});

  SemiSupTrialResult res;
  for (int it = 0; it < cfg.iterations; ++it) {
    SemiSupBatch batch;
    const std::vector<Index> li = draw_indices(static_cast<Index>(labeled.size()), cfg.labeled_batch, batch_rng);
    batch.labeled.resize(cfg.labeled_batch, data.train.cols());
    for (Index r = 0; r < cfg.labeled_batch; ++r) {
      const Index src = labeled[static_cast<std::size_t>(li[static_cast<std::size_t>(r)])];
      batch.labeled.row(r) = data.train.row(src);
      batch.labels.push_back(labeled_y[static_cast<std::size_t>(li[static_cast<std::size_t>(r)])]);
    }
    const std::vector<Index> ui = draw_indices(n, cfg.unlabeled_batch, batch_rng);
    batch.unlabeled = gather(data.train, ui);
    batch.unlabeled_ids.assign(ui.begin(), ui.end());

    const std::uint64_t step_seed = derive_seed(seed, {0xa06, static_cast<std::uint64_t>(it)});
    SemiSupLoss loss = [&] {
      if (!cfg.ema_pseudo_labels || method == SemiSupMethod::supervised) {
        return semisup_loss(net, net, batch, method, aug, cfg, step_seed);
      }
      return semisup_loss(net, ema_network(ema, net), batch, method, aug, cfg, step_seed);
    }();
    if (!std::isfinite(loss.total) || !loss.grad.allFinite()) {
      throw DivergenceError("run_semisup_trial: non-finite loss", static_cast<std::size_t>(it));
    }
    opt.step(net.mutable_params(), std::move(loss.grad));
    ema = ema_update(ema, net);
    res.records.push_back({it + 1, loss.total, loss.supervised, loss.consistency,
                           static_cast<double>(loss.confident) / static_cast<double>(cfg.unlabeled_batch)});
  }
  res.accuracy = accuracy(ema_network(ema, net), data.test, data.test_labels);
  return res;
}

}  // namespace vlgo
