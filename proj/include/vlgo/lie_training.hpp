#pragma once

// Alternating minimization for a Lie group operator dictionary on point
// pairs: infer coefficients with the dictionary frozen, then take one
// gradient step on the dictionary (and on the coefficient encoder when the
// inference is variational).

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "vlgo/data_gen.hpp"
#include "vlgo/metrics_io.hpp"
#include "vlgo/networks.hpp"
#include "vlgo/operator_dict.hpp"
#include "vlgo/optim.hpp"
#include "vlgo/sparse_inference.hpp"

namespace vlgo {

enum class InferenceKind { fista, variational };

struct LieTrainConfig {
  InferenceKind inference = InferenceKind::fista;
  std::int64_t epochs = 1000;
  double fro_weight = 1e-3;
  /// FISTA settings; fista.l1_weight is the sparsity weight.
  FistaConfig fista;
  VariationalConfig variational;
  /// Fixed Laplacian prior of the variational objective.
  double prior_shift = 0.0;
  double prior_scale = 0.01;
  /// Hidden widths of the coefficient encoder.
  std::vector<Index> encoder_hidden{64, 64};
  /// Multiplier on the encoder input [z | z'].
  double encoder_input_scale = 1.0;
  /// Initial bias of the encoder's log-scale outputs.
  double encoder_init_log_scale = -4.6;
  double encoder_output_init_scale = 0.1;
  OptimizerConfig dict_optimizer{OptimizerKind::adamw, 1e-2, 0.0, 1.0};
  OptimizerConfig encoder_optimizer{OptimizerKind::adamw, 1e-3, 1e-5, 1.0};
  int workers = 1;
  /// When false runtime_s is recorded as 0 so output is byte-reproducible.
  bool record_runtime = true;
  std::uint64_t seed = 0;
};

struct LieTrainResult {
  OperatorDictionaryd dict;
  /// Trained coefficient encoder (variational inference only).
  std::optional<MlpNet> encoder;
  std::vector<MetricsRecord> records;
  /// Wall-clock seconds for the whole run, whatever record_runtime says.
  double wall_clock_s = 0.0;
};

/// Encoder architecture used by train_lie_operators: [z | z'] -> hidden ->
/// laplacian head over dict.size() coefficients.
[[nodiscard]] MlpNet make_coefficient_encoder(Index feature_dim, Index num_ops, const LieTrainConfig& cfg, Rng& rng);

/// Runs cfg.epochs alternating steps; epoch e uses batches[e % batches.size()].
/// Records per epoch: mean L_m, mean ||c||_1, mean KL, mean DI (measured
/// with the dictionary before the update), cumulative runtime and the
/// operator norms after the update. Throws DivergenceError with the epoch
/// index on a non-finite loss.
[[nodiscard]] LieTrainResult train_lie_operators(const std::vector<PointPairBatch>& batches, OperatorDictionaryd dict,
                                                 const LieTrainConfig& cfg);

/// Coefficients for each pair: FISTA solutions, or the best-of-many sample of
/// the encoder posterior.
[[nodiscard]] Eigen::MatrixXd infer_coefficients(const LieTrainResult& model, const PointPairBatch& batch,
                                                 const LieTrainConfig& cfg, std::uint64_t seed);

}  // namespace vlgo
