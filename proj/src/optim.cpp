#include "vlgo/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vlgo {

double clip_by_global_norm(Eigen::Ref<Eigen::VectorXd> g, double max_norm) {
  const double norm = g.norm();
  if (max_norm > 0.0 && norm > max_norm) g *= max_norm / norm;
  return norm;
}

double Optimizer::step(Eigen::Ref<Eigen::VectorXd> params, Eigen::VectorXd grad) {
  if (grad.size() != params.size()) throw std::invalid_argument("Optimizer::step: gradient size mismatch");
  if (!(cfg_.lr >= 0.0)) throw std::invalid_argument("Optimizer::step: negative learning rate");
  const double norm = clip_by_global_norm(grad, cfg_.clip_norm);
  ++t_;
  if (cfg_.weight_decay != 0.0) params *= 1.0 - cfg_.lr * cfg_.weight_decay;
  if (cfg_.kind == OptimizerKind::sgd) {
    params -= cfg_.lr * grad;
    return norm;
  }
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
  }
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params.array() -= cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
  return norm;
}

}  // namespace vlgo
