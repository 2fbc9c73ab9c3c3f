#pragma once

// Semi-supervised training of a small classifier on frozen features:
// cross-entropy on labeled points plus confidence-masked pseudo-label
// consistency on augmented unlabeled points.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "vlgo/networks.hpp"
#include "vlgo/operator_dict.hpp"
#include "vlgo/optim.hpp"

namespace vlgo {

enum class SemiSupMethod {
  /// Labeled cross-entropy only.
  supervised,
  /// Pseudo-label consistency on the unaugmented features.
  pseudo_label,
  /// Pseudo-label consistency on interpolations of unlabeled features.
  mixup,
  /// Pseudo-label consistency on transports T(c~) z with c~ from the prior network.
  vlgo,
};

[[nodiscard]] std::string_view to_string(SemiSupMethod m) noexcept;
[[nodiscard]] std::optional<SemiSupMethod> parse_semisup_method(std::string_view s) noexcept;

struct SemiSupConfig {
  Index labeled_batch = 32;
  Index unlabeled_batch = 480;
  /// tau: confidence needed for a pseudo-label. Values above 1 disable the
  /// consistency term.
  double confidence = 0.95;
  int iterations = 1000;
  double ema_decay = 0.999;
  /// Pseudo-labels from the EMA classifier; false uses the live classifier.
  bool ema_pseudo_labels = true;
  double unlabeled_weight = 1.0;
  Index hidden = 128;
  OptimizerConfig optimizer{OptimizerKind::adamw, 1e-3, 5e-4, 0.0};
  /// Soft-threshold prior samples before transporting.
  bool prior_threshold = false;
  double zeta = 0.01;
};

void validate(const SemiSupConfig& cfg);

/// Dictionary and prior network that generate VLGO augmentations.
struct SemiSupAugmenter {
  const OperatorDictionaryd* dict = nullptr;
  const MlpNet* prior = nullptr;
};

struct SemiSupBatch {
  Eigen::MatrixXd labeled;
  std::vector<int> labels;
  Eigen::MatrixXd unlabeled;
  /// Stable identifier per unlabeled row; augmentation noise is keyed by it.
  std::vector<std::uint64_t> unlabeled_ids;
};

struct SemiSupLoss {
  double total = 0.0;
  double supervised = 0.0;
  double consistency = 0.0;
  /// N^u: unlabeled rows above the confidence threshold.
  Index confident = 0;
  /// Gradient with respect to the classifier parameters.
  Eigen::VectorXd grad;
};

/// 1/B^l sum H(r(z^l), y^l) + w/N^u sum 1[max q^u >= tau] H(r(z~^u), y^u),
/// where q^u and y^u = argmax q^u come from `pseudo_labeler` on the clean
/// features and carry no gradient. Augmentation noise derives from `seed`
/// and the unlabeled ids only.
[[nodiscard]] SemiSupLoss semisup_loss(const MlpNet& classifier, const MlpNet& pseudo_labeler,
                                       const SemiSupBatch& batch, SemiSupMethod method,
                                       const SemiSupAugmenter& aug, const SemiSupConfig& cfg, std::uint64_t seed);

struct SemiSupData {
  Eigen::MatrixXd train;
  std::vector<int> train_labels;
  Eigen::MatrixXd test;
  std::vector<int> test_labels;
  int num_classes = 0;
};

/// Labeled training indices grouped by class.
struct LabelSplit {
  std::vector<std::vector<Index>> per_class;

  [[nodiscard]] std::vector<Index> indices() const;
};

/// `per_class` distinct random indices of each class, drawn from `labels`.
[[nodiscard]] LabelSplit make_label_split(const std::vector<int>& labels, int num_classes, Index per_class,
                                          std::uint64_t seed);

struct SemiSupIterRecord {
  int iteration = 0;
  double loss = 0.0;
  double supervised = 0.0;
  double consistency = 0.0;
  /// Fraction of the unlabeled batch above the confidence threshold.
  double mask_rate = 0.0;
};

struct SemiSupTrialResult {
  /// Accuracy of the EMA classifier on the test set.
  double accuracy = 0.0;
  std::vector<SemiSupIterRecord> records;
};

/// Trains a single-hidden-layer classifier from scratch on the split; the
/// unlabeled pool is the whole training set. Batches and the classifier
/// init depend on `seed` only, so methods compared under one seed see the
/// same data order. Throws std::invalid_argument when a class has no label.
[[nodiscard]] SemiSupTrialResult run_semisup_trial(const SemiSupData& data, const LabelSplit& split,
                                                   SemiSupMethod method, const SemiSupAugmenter& aug,
                                                   const SemiSupConfig& cfg, std::uint64_t seed);

}  // namespace vlgo
