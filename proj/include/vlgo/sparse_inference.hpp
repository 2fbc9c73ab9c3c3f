#pragma once

// Coefficient inference for the operator model: exact l1-regularized
// inference by FISTA and the reparameterized Laplacian sampler with
// soft-threshold straight-through and best-of-many selection.

#include <Eigen/Core>

#include <optional>

#include "vlgo/operator_dict.hpp"
#include "vlgo/rng.hpp"

namespace vlgo {

/// Per-coefficient Laplace(shift, scale) parameters. Networks emit log-scale,
/// clamped to a configured interval, and scale = exp(log_scale).
struct LaplacianParams {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  [[nodiscard]] Index size() const noexcept { return shift.size(); }

  /// Broadcast constant parameters to m coefficients.
  [[nodiscard]] static LaplacianParams constant(Index m, double shift, double scale) {
    return {Eigen::VectorXd::Constant(m, shift), Eigen::VectorXd::Constant(m, scale)};
  }
};

struct VariationalConfig {
  /// J: number of samples for best-of-many.
  int samples = 1;
  /// zeta: soft-threshold level.
  double zeta = 0.01;
  bool use_threshold = false;
  /// beta: KL weight.
  double beta_kl = 5e-3;
};

void validate(const VariationalConfig& cfg);

struct FistaConfig {
  double l1_weight = 0.6;
  int max_iters = 100;
  /// Stop when ||c_k - c_{k-1}|| <= tol * max(1, ||c_k||).
  double tol = 1e-5;
  /// Starting Lipschitz estimate for the backtracking search.
  double initial_lipschitz = 1.0;
  /// Multiplier applied to the Lipschitz estimate on a failed sufficient-decrease test.
  double backtrack_factor = 2.0;
  /// Function-value momentum restart.
  bool restart = true;
};

struct FistaResult {
  Eigen::VectorXd c;
  /// ||z' - T(c) z||^2 at the returned c.
  double smooth_loss = 0.0;
  /// smooth_loss + l1_weight * ||c||_1.
  double objective = 0.0;
  int iterations = 0;
};

/// Approximately minimizes ||z' - T(c) z||^2 + l1 ||c||_1 with backtracking
/// FISTA and function-value restart, starting from `init` (zero if absent).
/// Throws DivergenceError if the loss becomes non-finite.
[[nodiscard]] FistaResult fista_infer(const OperatorDictionaryd& dict, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& target, const FistaConfig& cfg,
                                      const std::optional<Eigen::VectorXd>& init = std::nullopt);

/// Gradient of the smooth part ||z' - T(c) z||^2 with respect to c.
[[nodiscard]] Eigen::VectorXd coefficient_gradient(const OperatorDictionaryd& dict, const Eigen::VectorXd& z,
                                                   const Eigen::VectorXd& target, const Eigen::VectorXd& c);

/// A reparameterized sample s = shift + scale * unit with
/// unit = sign(eps) * ln(1 - 2|eps|), eps ~ U(-1/2, 1/2).
/// ds/dshift = 1 and ds/dscale = unit for fixed eps.
struct LaplacianSample {
  Eigen::VectorXd value;
  Eigen::VectorXd unit;
};

[[nodiscard]] LaplacianSample sample_laplacian(const LaplacianParams& params, Rng& rng);

/// sign(s) * max(|s| - zeta, 0).
[[nodiscard]] Eigen::VectorXd soft_threshold(const Eigen::VectorXd& s, double zeta);

/// c = s + sg[T_zeta(s) - s]: forward value is the soft threshold, backward is
/// the identity.
struct StraightThrough {
  Eigen::VectorXd value;

  [[nodiscard]] static StraightThrough apply(const Eigen::VectorXd& s, double zeta) {
    return {soft_threshold(s, zeta)};
  }
  [[nodiscard]] const Eigen::VectorXd& backward(const Eigen::VectorXd& upstream) const { return upstream; }
};

struct BestOfMany {
  /// Selected coefficients (thresholded when configured).
  Eigen::VectorXd c;
  /// Pre-threshold sample and its unit noise, for the reparameterization gradient.
  LaplacianSample sample;
  Index index = 0;
  double loss = 0.0;
};

/// Draws cfg.samples coefficient vectors and keeps the one with the smallest
/// manifold loss; ties resolve to the lowest index.
[[nodiscard]] BestOfMany best_of_many(const OperatorDictionaryd& dict, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& target, const LaplacianParams& params,
                                      const VariationalConfig& cfg, Rng& rng);

/// Cotangents of (shift, scale) given dL/ds for a fixed reparameterization noise.
struct LaplacianGrad {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
};

[[nodiscard]] LaplacianGrad reparam_backward(const LaplacianSample& sample, const Eigen::VectorXd& grad_sample);

struct KlResult {
  double value = 0.0;
  LaplacianGrad q;
  LaplacianGrad p;
};

/// Sum over components of KL(Laplace(mu_q, b_q) || Laplace(mu_p, b_p)) =
/// log(b_p / b_q) + (b_q exp(-|mu_q - mu_p| / b_q) + |mu_q - mu_p|) / b_p - 1,
/// with gradients for all four parameter vectors.
[[nodiscard]] KlResult kl_laplacian(const LaplacianParams& q, const LaplacianParams& p);

}  // namespace vlgo
