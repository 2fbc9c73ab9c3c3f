#pragma once

// InfoNCE with manifold feature augmentations and the ManifoldCLR system
// objective: L_ctt(z~, z') + lambda * L_m(z, z', c) + beta * KL(q || p).

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "vlgo/networks.hpp"
#include "vlgo/operator_dict.hpp"
#include "vlgo/optim.hpp"
#include "vlgo/sparse_inference.hpp"

namespace vlgo {

enum class DistanceKind {
  /// Squared Euclidean distance on raw features.
  squared,
  /// Squared Euclidean distance between L2-normalized features.
  normalized,
};

enum class AugmentSource { prior, encoder, none };

struct ContrastiveConfig {
  double temperature = 0.5;
  DistanceKind distance = DistanceKind::squared;
  bool use_projection = false;
  AugmentSource augment_source = AugmentSource::prior;
};

struct InfoNceResult {
  double value = 0.0;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_positive;
  /// One row per negative.
  Eigen::MatrixXd grad_negatives;
};

/// -log[exp(-D(a,p)/tau) / (sum_j exp(-D(a,n_j)/tau) + exp(-D(a,p)/tau))]
/// with negatives given one per row.
[[nodiscard]] InfoNceResult info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                                     const Eigen::MatrixXd& negatives, const ContrastiveConfig& cfg);

/// Same loss after passing every feature through the projection head.
/// `grad_head` receives the head's parameter gradient.
[[nodiscard]] InfoNceResult info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                                     const Eigen::MatrixXd& negatives, const ContrastiveConfig& cfg,
                                     const MlpNet& head, Eigen::VectorXd* grad_head);

struct BatchInfoNce {
  /// Mean over anchors.
  double value = 0.0;
  Eigen::MatrixXd grad_anchors;
  Eigen::MatrixXd grad_positives;
  /// Gradient reaching the clean features through their role as negatives.
  Eigen::MatrixXd grad_clean;
};

/// In-batch InfoNCE: anchor i is paired with positives.row(i); its negatives
/// are clean.row(j) and positives.row(j) for every j != i.
[[nodiscard]] BatchInfoNce info_nce_batch(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                                          const Eigen::MatrixXd& clean, const ContrastiveConfig& cfg);

struct ManifoldClrConfig {
  ContrastiveConfig contrastive;
  double lambda_manifold = 1.0;
  /// J, zeta, thresholding of the posterior and the KL weight beta.
  VariationalConfig variational{1, 0.01, false, 1e-3};
  bool stop_grad_target = true;
  /// Use the warm-up parameters (mu0, b0) as the prior throughout.
  bool fixed_prior = false;
  /// Soft-threshold the prior augmentation samples.
  bool prior_threshold = false;
  /// Block the KL gradient into the prior network.
  bool kl_prior_stop_grad = false;
  WarmupSchedule warmup{5000, 0.05, 0.01};

  Index feature_dim = 16;
  Index num_ops = 8;
  Index block_size = 16;
  std::vector<Index> backbone_hidden{64, 64};
  std::vector<Index> encoder_hidden{64, 64};
  std::vector<Index> prior_hidden{64, 64};
  std::vector<Index> projection_hidden{64};
  Index projection_dim = 16;
  InitConfig dict_init{1e-4, 6.0, 0.0, false};
  double coefficient_init_scale = 0.1;

  OptimizerConfig backbone_optimizer{OptimizerKind::adamw, 3e-3, 1e-5, 5.0};
  OptimizerConfig projection_optimizer{OptimizerKind::adamw, 3e-3, 1e-5, 5.0};
  OptimizerConfig dict_optimizer{OptimizerKind::adamw, 1e-3, 1e-3, 1.0};
  OptimizerConfig encoder_optimizer{OptimizerKind::adamw, 1e-3, 1e-5, 1.0};
  OptimizerConfig prior_optimizer{OptimizerKind::adamw, 1e-3, 1e-5, 1.0};
  int workers = 1;
};

struct ManifoldClrModel {
  MlpNet backbone;
  OperatorDictionaryd dict;
  MlpNet encoder;
  MlpNet prior;
  std::optional<MlpNet> projection;
};

struct ManifoldClrOptimizers {
  Optimizer backbone;
  Optimizer projection;
  Optimizer dict;
  Optimizer encoder;
  Optimizer prior;
};

/// Random initialization of every parameter group.
[[nodiscard]] ManifoldClrModel make_manifoldclr_model(Index input_dim, const ManifoldClrConfig& cfg, Rng& rng);
[[nodiscard]] ManifoldClrOptimizers make_manifoldclr_optimizers(const ManifoldClrConfig& cfg);

struct ClrLosses {
  double total = 0.0;
  double contrastive = 0.0;
  double manifold = 0.0;
  double kl = 0.0;
};

/// One end-to-end step on a batch of positive pairs (x1.row(i), x2.row(i)).
/// `iter` drives the prior warm-up; per-pair randomness derives from
/// step_seed and the pair index only. Throws DivergenceError on a
/// non-finite loss, naming each component.
ClrLosses manifoldclr_step(ManifoldClrModel& model, ManifoldClrOptimizers& opt, const Eigen::MatrixXd& x1,
                           const Eigen::MatrixXd& x2, const ManifoldClrConfig& cfg, Index iter,
                           std::uint64_t step_seed);

/// Plain SimCLR step: InfoNCE on (f(x1), f(x2)) with in-batch negatives,
/// updating the backbone and the optional projection head.
ClrLosses simclr_step(ManifoldClrModel& model, ManifoldClrOptimizers& opt, const Eigen::MatrixXd& x1,
                      const Eigen::MatrixXd& x2, const ManifoldClrConfig& cfg);

/// Backbone features, one row per input row.
[[nodiscard]] Eigen::MatrixXd encode_features(const MlpNet& backbone, const Eigen::MatrixXd& x);

struct LinearProbeConfig {
  int epochs = 500;
  double lr_start = 1e-2;
  double lr_end = 1e-5;
  double test_fraction = 0.3;
  /// Standardize features with training-split statistics.
  bool standardize = true;
  std::uint64_t seed = 0;
};

/// Softmax-regression probe trained full-batch with Adam on a shuffled
/// training split; returns accuracy on the held-out split. Throws
/// std::invalid_argument when fewer than two classes are present.
[[nodiscard]] double linear_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                  const LinearProbeConfig& cfg);

/// Probe trained on (train_x, train_y) and scored on (test_x, test_y).
[[nodiscard]] double linear_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                                  const Eigen::MatrixXd& test_x, const std::vector<int>& test_y,
                                  const LinearProbeConfig& cfg);

}  // namespace vlgo
