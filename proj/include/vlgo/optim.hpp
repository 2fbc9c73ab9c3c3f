#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace vlgo {

/// Rescales g in place so its Euclidean norm is at most max_norm (a value
/// <= 0 disables clipping). Returns the norm before clipping.
double clip_by_global_norm(Eigen::Ref<Eigen::VectorXd> g, double max_norm);

enum class OptimizerKind { sgd, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 1e-3;
  double weight_decay = 0.0;
  /// Global-norm clip applied to each gradient before the update; <= 0 disables.
  double clip_norm = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One optimizer per parameter group. Weight decay is decoupled: the
/// parameters are scaled by (1 - lr * wd) independently of the gradient.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  /// Applies one clipped update; returns the gradient norm before clipping.
  double step(Eigen::Ref<Eigen::VectorXd> params, Eigen::VectorXd grad);

  [[nodiscard]] const OptimizerConfig& config() const noexcept { return cfg_; }
  /// Schedules adjust the step size between updates; moment estimates persist.
  void set_learning_rate(double lr) noexcept { cfg_.lr = lr; }
  [[nodiscard]] std::int64_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t t_ = 0;
};

}  // namespace vlgo
