#include "vlgo/operator_dict.hpp"

#include "vlgo/optim.hpp"

namespace vlgo {

OperatorDictionaryd init_dictionary(Index num_ops, Index dim, Index block_size, const InitConfig& cfg,
                                    Rng& rng) {
  if (!std::isfinite(cfg.alpha) || !std::isfinite(cfg.beta_eig) || !std::isfinite(cfg.jitter_sd)) {
    throw std::invalid_argument("init_dictionary: non-finite init parameters");
  }
  if (block_size % 2 != 0 && !cfg.odd_trailing_cell) {
    throw std::invalid_argument("init_dictionary: block size " + std::to_string(block_size) +
                                " is odd; conjugate-pair initialization needs even blocks");
  }
  OperatorDictionaryd dict(num_ops, dim, block_size);
  for (Index m = 0; m < num_ops; ++m) {
    for (Index j = 0; j < dict.num_blocks(); ++j) {
      Eigen::MatrixXd& blk = dict.op(m).block(j);
      Index i = 0;
      for (; i + 1 < block_size; i += 2) {
        blk(i, i) = cfg.alpha;
        blk(i + 1, i + 1) = cfg.alpha;
        blk(i, i + 1) = cfg.beta_eig;
        blk(i + 1, i) = -cfg.beta_eig;
      }
      if (i < block_size) blk(i, i) = cfg.alpha;
      if (cfg.jitter_sd > 0.0) {
        for (Index c = 0; c < block_size; ++c) {
          for (Index r = 0; r < block_size; ++r) blk(r, c) += cfg.jitter_sd * standard_normal(rng);
        }
      }
    }
  }
  return dict;
}

OperatorDictionaryd grad_clip_and_step(const OperatorDictionaryd& dict, const OperatorDictionaryd& grads,
                                       double lr, double clip_norm, double weight_decay) {
  if (!(lr > 0.0)) throw std::invalid_argument("grad_clip_and_step: learning rate must be positive");
  if (grads.size() != dict.size() || grads.dim() != dict.dim() || grads.block_size() != dict.block_size()) {
    throw std::invalid_argument("grad_clip_and_step: gradient shape does not match dictionary");
  }
  Optimizer opt(OptimizerConfig{OptimizerKind::sgd, lr, weight_decay, clip_norm});
  Eigen::VectorXd params = dict.flat();
  opt.step(params, grads.flat());
  OperatorDictionaryd out = dict;
  out.assign_flat(params);
  return out;
}

}  // namespace vlgo
