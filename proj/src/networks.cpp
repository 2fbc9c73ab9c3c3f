#include "vlgo/networks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vlgo {

namespace {

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

}  // namespace

MlpNet::MlpNet(MlpConfig cfg) : cfg_(std::move(cfg)), id_(next_net_id()) {
  if (cfg_.dims.size() < 2) throw std::invalid_argument("MlpNet: need at least input and output dims");
  for (Index d : cfg_.dims) {
    if (d < 1) throw std::invalid_argument("MlpNet: layer widths must be positive");
  }
  if (cfg_.head == HeadType::laplacian && cfg_.dims.back() % 2 != 0) {
    throw std::invalid_argument("MlpNet: laplacian head needs an even output width (shift and log-scale)");
  }
  if (!(cfg_.log_scale_min <= cfg_.log_scale_max)) {
    throw std::invalid_argument("MlpNet: log_scale_min must not exceed log_scale_max");
  }
  build_layout();
}

MlpNet::MlpNet(MlpConfig cfg, Rng& rng) : MlpNet(std::move(cfg)) {
  for (Index l = 0; l < num_layers(); ++l) {
    auto w = weight(l);
    const double fan_in = static_cast<double>(w.cols());
    double bound = std::sqrt(6.0 / ((1.0 + cfg_.negative_slope * cfg_.negative_slope) * fan_in));
    if (l + 1 == num_layers()) bound *= cfg_.output_init_scale;
    for (Index c = 0; c < w.cols(); ++c) {
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
}

void MlpNet::build_layout() {
  Index offset = 0;
  weight_offset_.clear();
  bias_offset_.clear();
  for (Index l = 0; l < num_layers(); ++l) {
    const Index in = cfg_.dims[static_cast<std::size_t>(l)];
    const Index out = cfg_.dims[static_cast<std::size_t>(l + 1)];
    weight_offset_.push_back(offset);
    offset += in * out;
    bias_offset_.push_back(offset);
    offset += out;
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

Eigen::Map<const Eigen::MatrixXd> MlpNet::weight(Index layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset_[l], cfg_.dims[l + 1], cfg_.dims[l]};
}

Eigen::Map<const Eigen::VectorXd> MlpNet::bias(Index layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + bias_offset_[l], cfg_.dims[l + 1]};
}

Eigen::Map<Eigen::MatrixXd> MlpNet::weight(Index layer) {
  ++version_;
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset_[l], cfg_.dims[l + 1], cfg_.dims[l]};
}

Eigen::Map<Eigen::VectorXd> MlpNet::bias(Index layer) {
  ++version_;
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + bias_offset_[l], cfg_.dims[l + 1]};
}

void MlpNet::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw std::invalid_argument("MlpNet::set_params: parameter count mismatch");
  ++version_;
  params_ = p;
}

MlpOutput mlp_forward(const MlpNet& net, const Eigen::MatrixXd& x) {
  if (x.cols() != net.input_dim()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(x.cols()) + " != " +
                                std::to_string(net.input_dim()));
  }
  const MlpConfig& cfg = net.config();
  MlpOutput out;
  out.cache.net_id = net.id();
  out.cache.version = net.version();
  out.cache.inputs.reserve(static_cast<std::size_t>(net.num_layers()));
  out.cache.pre.reserve(static_cast<std::size_t>(net.num_layers()));
  Eigen::MatrixXd h = x;
  for (Index l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd pre = h * net.weight(l).transpose();
    pre.rowwise() += net.bias(l).transpose();
    out.cache.inputs.push_back(std::move(h));
    if (l + 1 < net.num_layers()) {
      h = pre.unaryExpr([s = cfg.negative_slope](double v) { return leaky(v, s); });
    } else {
      h = pre;
    }
    out.cache.pre.push_back(std::move(pre));
  }
  switch (cfg.head) {
    case HeadType::plain:
      break;
    case HeadType::laplacian: {
      const Index m = net.coefficient_dim();
      h.rightCols(m) = h.rightCols(m).cwiseMax(cfg.log_scale_min).cwiseMin(cfg.log_scale_max);
      break;
    }
    case HeadType::normalized: {
      for (Index i = 0; i < h.rows(); ++i) {
        const double n = h.row(i).norm();
        if (n > 0.0) h.row(i) /= n;
      }
      break;
    }
  }
  out.value = std::move(h);
  return out;
}

MlpGrad mlp_backward(const MlpNet& net, const MlpCache& cache, const Eigen::MatrixXd& upstream) {
  if (cache.net_id != net.id() || cache.version != net.version() ||
      static_cast<Index>(cache.pre.size()) != net.num_layers()) {
    throw InvalidStateError("mlp_backward: cache does not match the network's current parameters");
  }
  const Eigen::MatrixXd& last = cache.pre.back();
  if (upstream.rows() != last.rows() || upstream.cols() != last.cols()) {
    throw std::invalid_argument("mlp_backward: upstream gradient has the wrong shape");
  }
  const MlpConfig& cfg = net.config();
  Eigen::MatrixXd g = upstream;
  switch (cfg.head) {
    case HeadType::plain:
      break;
    case HeadType::laplacian: {
      const Index m = net.coefficient_dim();
      for (Index c = 0; c < m; ++c) {
        for (Index i = 0; i < g.rows(); ++i) {
          const double raw = last(i, m + c);
          if (raw < cfg.log_scale_min || raw > cfg.log_scale_max) g(i, m + c) = 0.0;
        }
      }
      break;
    }
    case HeadType::normalized: {
      for (Index i = 0; i < g.rows(); ++i) {
        const double n = last.row(i).norm();
        if (n == 0.0) continue;
        const Eigen::RowVectorXd y = last.row(i) / n;
        g.row(i) = (g.row(i) - g.row(i).dot(y) * y) / n;
      }
      break;
    }
  }

  MlpGrad out{Eigen::VectorXd::Zero(net.num_params()), Eigen::MatrixXd()};
  Index offset = 0;
  std::vector<Index> w_off;
  std::vector<Index> b_off;
  for (Index l = 0; l < net.num_layers(); ++l) {
    const auto in = cfg.dims[static_cast<std::size_t>(l)];
    const auto o = cfg.dims[static_cast<std::size_t>(l + 1)];
    w_off.push_back(offset);
    offset += in * o;
    b_off.push_back(offset);
    offset += o;
  }
  for (Index l = net.num_layers() - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    if (l + 1 < net.num_layers()) {
      const Eigen::MatrixXd& pre = cache.pre[ul];
      g = g.cwiseProduct(pre.unaryExpr([s = cfg.negative_slope](double v) { return v > 0.0 ? 1.0 : s; }));
    }
    const Eigen::MatrixXd& in = cache.inputs[ul];
    Eigen::Map<Eigen::MatrixXd> gw(out.params.data() + w_off[ul], g.cols(), in.cols());
    gw.noalias() = g.transpose() * in;
    Eigen::Map<Eigen::VectorXd>(out.params.data() + b_off[ul], g.cols()) = g.colwise().sum().transpose();
    g = (g * net.weight(l)).eval();
  }
  out.input = std::move(g);
  return out;
}

LaplacianBatch laplacian_from_output(const Eigen::MatrixXd& value) {
  if (value.cols() % 2 != 0) throw std::invalid_argument("laplacian_from_output: odd output width");
  const Index m = value.cols() / 2;
  return {value.leftCols(m), value.rightCols(m).array().exp().matrix()};
}

Eigen::MatrixXd laplacian_output_grad(const LaplacianBatch& params, const Eigen::MatrixXd& d_shift,
                                      const Eigen::MatrixXd& d_scale) {
  const Index m = params.shift.cols();
  Eigen::MatrixXd g(params.rows(), 2 * m);
  g.leftCols(m) = d_shift;
  // d scale / d log_scale = scale
  g.rightCols(m) = d_scale.cwiseProduct(params.scale);
  return g;
}

PosteriorEncoding encode_posterior(const MlpNet& encoder, const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                                   double input_scale) {
  if (z.rows() != target.rows() || z.cols() != target.cols()) {
    throw std::invalid_argument("encode_posterior: z and z' shapes differ");
  }
  if (encoder.config().head != HeadType::laplacian) {
    throw std::invalid_argument("encode_posterior: encoder needs a laplacian head");
  }
  if (encoder.input_dim() != 2 * z.cols()) {
    throw std::invalid_argument("encode_posterior: encoder input width must be 2 * feature dim");
  }
  Eigen::MatrixXd joined(z.rows(), 2 * z.cols());
  joined << z, target;
  if (input_scale != 1.0) joined *= input_scale;
  MlpOutput fw = mlp_forward(encoder, joined);
  return {laplacian_from_output(fw.value), std::move(fw.cache)};
}

Eigen::VectorXd posterior_backward(const MlpNet& encoder, const PosteriorEncoding& enc, const Eigen::MatrixXd& d_shift,
                                   const Eigen::MatrixXd& d_scale) {
  return mlp_backward(encoder, enc.cache, laplacian_output_grad(enc.params, d_shift, d_scale)).params;
}

double WarmupSchedule::kappa(Index iter) const {
  if (total_iters <= 0 || iter >= total_iters) return 1.0;
  if (iter <= 0) return 0.0;
  return static_cast<double>(iter) / static_cast<double>(total_iters);
}

PriorEncoding encode_prior(const MlpNet& prior, const Eigen::MatrixXd& z, const WarmupSchedule& schedule, Index iter) {
  if (iter < 0) throw std::invalid_argument("encode_prior: iteration must be >= 0");
  if (prior.config().head != HeadType::laplacian) {
    throw std::invalid_argument("encode_prior: prior network needs a laplacian head");
  }
  MlpOutput fw = mlp_forward(prior, z);
  PriorEncoding enc{laplacian_from_output(fw.value), std::move(fw.cache), schedule.kappa(iter)};
  if (enc.kappa < 1.0) {
    const double k = enc.kappa;
    enc.params.shift = (k * enc.params.shift.array() + (1.0 - k) * schedule.mu0).matrix();
    enc.params.scale = (k * enc.params.scale.array() + (1.0 - k) * schedule.b0).matrix();
  }
  return enc;
}

Eigen::VectorXd prior_backward(const MlpNet& prior, const PriorEncoding& enc, const Eigen::MatrixXd& d_shift,
                               const Eigen::MatrixXd& d_scale) {
  if (enc.kappa == 0.0) return Eigen::VectorXd::Zero(prior.num_params());
  // Un-blend: the network's own scale is needed for the log-scale chain rule.
  LaplacianBatch net_params = enc.params;
  if (enc.kappa < 1.0) {
    const double k = enc.kappa;
    const auto& last = enc.cache.pre.back();
    const Index m = net_params.shift.cols();
    const auto& cfg = prior.config();
    net_params.scale = last.rightCols(m).cwiseMax(cfg.log_scale_min).cwiseMin(cfg.log_scale_max).array().exp().matrix();
    return mlp_backward(prior, enc.cache, laplacian_output_grad(net_params, k * d_shift, k * d_scale)).params;
  }
  return mlp_backward(prior, enc.cache, laplacian_output_grad(net_params, d_shift, d_scale)).params;
}

EmaState ema_init(const MlpNet& net, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("ema_init: decay must lie in [0, 1)");
  return {net.params(), decay};
}

EmaState ema_update(const EmaState& ema, const MlpNet& net) {
  if (ema.shadow.size() != net.num_params()) throw std::invalid_argument("ema_update: shape mismatch");
  return {ema.decay * ema.shadow + (1.0 - ema.decay) * net.params(), ema.decay};
}

MlpNet ema_network(const EmaState& ema, const MlpNet& net) {
  MlpNet copy = net;
  copy.set_params(ema.shadow);
  return copy;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
    p.row(i) = e / e.sum();
  }
  return p;
}

CrossEntropy cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels, double normalizer,
                           const std::vector<bool>* mask) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("cross_entropy: label count mismatch");
  }
  if (mask && mask->size() != labels.size()) throw std::invalid_argument("cross_entropy: mask size mismatch");
  if (!(normalizer > 0.0)) throw std::invalid_argument("cross_entropy: normalizer must be positive");
  CrossEntropy out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  for (Index i = 0; i < logits.rows(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw std::invalid_argument("cross_entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    out.value += (std::log(z) + mx - logits(i, y)) / normalizer;
    out.grad.row(i) = e / (z * normalizer);
    out.grad(i, y) -= 1.0 / normalizer;
  }
  return out;
}

}  // namespace vlgo
