#pragma once

// Small feed-forward networks with hand-written reverse mode. Batches are
// row-major in the sample sense: one sample per row.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "vlgo/rng.hpp"
#include "vlgo/sparse_inference.hpp"
#include "vlgo/types.hpp"

namespace vlgo {

enum class HeadType {
  /// Affine output.
  plain,
  /// Output is [shift | log_scale] for M coefficients; log_scale is clamped.
  laplacian,
  /// Affine output divided by its Euclidean norm.
  normalized,
};

struct MlpConfig {
  /// Layer widths including input and output, e.g. {in, 64, 64, out}.
  /// For a laplacian head the last entry is 2 * M.
  std::vector<Index> dims;
  double negative_slope = 0.01;
  HeadType head = HeadType::plain;
  double log_scale_min = -6.0;
  double log_scale_max = 2.0;
  /// Multiplier on the random init of the final layer.
  double output_init_scale = 1.0;
};

/// Parameters live in one flat vector: for each layer the weight matrix
/// (out x in, column-major) followed by the bias.
class MlpNet {
 public:
  MlpNet() = default;
  /// Zero parameters.
  explicit MlpNet(MlpConfig cfg);
  /// He-uniform weights, zero biases.
  MlpNet(MlpConfig cfg, Rng& rng);

  [[nodiscard]] const MlpConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] Index num_layers() const noexcept { return static_cast<Index>(cfg_.dims.size()) - 1; }
  [[nodiscard]] Index input_dim() const { return cfg_.dims.front(); }
  [[nodiscard]] Index output_dim() const { return cfg_.dims.back(); }
  /// Number of Laplacian coefficients for a laplacian head.
  [[nodiscard]] Index coefficient_dim() const { return output_dim() / 2; }
  [[nodiscard]] Index num_params() const noexcept { return params_.size(); }

  [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weight(Index layer) const;
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(Index layer) const;
  [[nodiscard]] Eigen::Map<Eigen::MatrixXd> weight(Index layer);
  [[nodiscard]] Eigen::Map<Eigen::VectorXd> bias(Index layer);

  [[nodiscard]] const Eigen::VectorXd& params() const noexcept { return params_; }
  /// Mutable access invalidates outstanding forward caches.
  [[nodiscard]] Eigen::VectorXd& mutable_params() noexcept {
    ++version_;
    return params_;
  }
  void set_params(const Eigen::VectorXd& p);

  [[nodiscard]] std::uint64_t version() const noexcept { return version_; }
  /// Identity token shared by copies; distinguishes unrelated networks.
  [[nodiscard]] std::uint64_t id() const noexcept { return id_; }
  [[nodiscard]] bool all_finite() const { return params_.allFinite(); }

 private:
  void build_layout();

  MlpConfig cfg_;
  Eigen::VectorXd params_;
  std::vector<Index> weight_offset_;
  std::vector<Index> bias_offset_;
  std::uint64_t version_ = 0;
  std::uint64_t id_ = 0;
};

struct MlpCache {
  /// Input to each layer (rows = samples).
  std::vector<Eigen::MatrixXd> inputs;
  /// Pre-activation of each layer.
  std::vector<Eigen::MatrixXd> pre;
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
};

struct MlpOutput {
  Eigen::MatrixXd value;
  MlpCache cache;
};

struct MlpGrad {
  Eigen::VectorXd params;
  Eigen::MatrixXd input;
};

/// Affine layers with leaky-rectifier activations between them; the head
/// transform is applied to the final affine output.
[[nodiscard]] MlpOutput mlp_forward(const MlpNet& net, const Eigen::MatrixXd& x);

/// Exact reverse-mode gradients, summed over the batch. `upstream` is dL/d
/// value. Throws InvalidStateError when the cache came from a different
/// network or the parameters changed since the forward pass.
[[nodiscard]] MlpGrad mlp_backward(const MlpNet& net, const MlpCache& cache, const Eigen::MatrixXd& upstream);

/// Batch of Laplacian parameters; one sample per row.
struct LaplacianBatch {
  Eigen::MatrixXd shift;
  Eigen::MatrixXd scale;

  [[nodiscard]] Index rows() const noexcept { return shift.rows(); }
  [[nodiscard]] LaplacianParams row(Index i) const { return {shift.row(i).transpose(), scale.row(i).transpose()}; }
};

/// Splits a laplacian-head output into (shift, exp(log_scale)).
[[nodiscard]] LaplacianBatch laplacian_from_output(const Eigen::MatrixXd& value);

/// dL/d value for a laplacian head given dL/dshift and dL/dscale.
[[nodiscard]] Eigen::MatrixXd laplacian_output_grad(const LaplacianBatch& params, const Eigen::MatrixXd& d_shift,
                                                    const Eigen::MatrixXd& d_scale);

struct PosteriorEncoding {
  LaplacianBatch params;
  MlpCache cache;
};

/// q_phi(c | z, z'): the encoder sees the detached concatenation [z | z'].
/// No gradient is ever returned for z or z'.
[[nodiscard]] PosteriorEncoding encode_posterior(const MlpNet& encoder, const Eigen::MatrixXd& z,
                                                 const Eigen::MatrixXd& target, double input_scale = 1.0);

/// Parameter gradient of the posterior encoder from dL/dshift and dL/dscale.
[[nodiscard]] Eigen::VectorXd posterior_backward(const MlpNet& encoder, const PosteriorEncoding& enc,
                                                 const Eigen::MatrixXd& d_shift, const Eigen::MatrixXd& d_scale);

/// Linear blend from fixed prior parameters to the learned prior over the
/// first total_iters iterations.
struct WarmupSchedule {
  Index total_iters = 5000;
  double mu0 = 0.05;
  double b0 = 0.01;

  /// kappa = iter / total_iters, reaching 1 at total_iters.
  [[nodiscard]] double kappa(Index iter) const;
};

struct PriorEncoding {
  LaplacianBatch params;
  MlpCache cache;
  double kappa = 1.0;
};

/// p_theta(c | z) blended with (mu0, b0) during warm-up. The input is detached.
[[nodiscard]] PriorEncoding encode_prior(const MlpNet& prior, const Eigen::MatrixXd& z,
                                         const WarmupSchedule& schedule, Index iter);

[[nodiscard]] Eigen::VectorXd prior_backward(const MlpNet& prior, const PriorEncoding& enc,
                                             const Eigen::MatrixXd& d_shift, const Eigen::MatrixXd& d_scale);

struct EmaState {
  Eigen::VectorXd shadow;
  double decay = 0.999;
};

[[nodiscard]] EmaState ema_init(const MlpNet& net, double decay);

/// shadow <- decay * shadow + (1 - decay) * current.
[[nodiscard]] EmaState ema_update(const EmaState& ema, const MlpNet& net);

/// Copy of `net` carrying the shadow parameters.
[[nodiscard]] MlpNet ema_network(const EmaState& ema, const MlpNet& net);

/// Row-wise softmax, shifted by the row maximum.
[[nodiscard]] Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct CrossEntropy {
  double value = 0.0;
  /// dL/dlogits.
  Eigen::MatrixXd grad;
};

/// sum_i mask_i * H(softmax(logits_i), labels_i) / normalizer. A null mask
/// selects every row.
[[nodiscard]] CrossEntropy cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                                         double normalizer, const std::vector<bool>* mask = nullptr);

}  // namespace vlgo
