#include "vlgo/sparse_inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vlgo {

namespace {

struct ValueGrad {
  double value;
  Eigen::VectorXd grad;
};

ValueGrad smooth_value_and_grad(const OperatorDictionaryd& dict, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& target, const Eigen::VectorXd& c) {
  const Index b = dict.block_size();
  ValueGrad out{0.0, Eigen::VectorXd::Zero(dict.size())};
  for (Index j = 0; j < dict.num_blocks(); ++j) {
    const Eigen::MatrixXd a = dict.generator(c, j);
    const auto zj = z.segment(j * b, b);
    const Eigen::VectorXd r = expm(a) * zj - target.segment(j * b, b);
    out.value += r.squaredNorm();
    const Eigen::MatrixXd h = expm_vjp(a, (2.0 * r) * zj.transpose());
    for (Index m = 0; m < dict.size(); ++m) out.grad[m] += (h.array() * dict.op(m).block(j).array()).sum();
  }
  return out;
}

double smooth_value(const OperatorDictionaryd& dict, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                    const Eigen::VectorXd& c) {
  return manifold_loss_value(dict, z, target, c);
}

}  // namespace

void validate(const VariationalConfig& cfg) {
  if (cfg.samples < 1) throw std::invalid_argument("VariationalConfig: samples (J) must be >= 1");
  if (!(cfg.zeta >= 0.0)) throw std::invalid_argument("VariationalConfig: zeta must be >= 0");
  if (!(cfg.beta_kl >= 0.0)) throw std::invalid_argument("VariationalConfig: beta_kl must be >= 0");
}

Eigen::VectorXd coefficient_gradient(const OperatorDictionaryd& dict, const Eigen::VectorXd& z,
                                     const Eigen::VectorXd& target, const Eigen::VectorXd& c) {
  detail::check_transport_args(dict, c, z, "coefficient_gradient");
  if (target.size() != z.size()) throw std::invalid_argument("coefficient_gradient: target dim mismatch");
  return smooth_value_and_grad(dict, z, target, c).grad;
}

FistaResult fista_infer(const OperatorDictionaryd& dict, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                        const FistaConfig& cfg, const std::optional<Eigen::VectorXd>& init) {
  if (cfg.max_iters < 1) throw std::invalid_argument("fista_infer: max_iters must be >= 1");
  if (!(cfg.l1_weight >= 0.0)) throw std::invalid_argument("fista_infer: l1_weight must be >= 0");
  if (!(cfg.initial_lipschitz > 0.0) || !(cfg.backtrack_factor > 1.0)) {
    throw std::invalid_argument("fista_infer: need initial_lipschitz > 0 and backtrack_factor > 1");
  }
  if (target.size() != z.size()) throw std::invalid_argument("fista_infer: target dim mismatch");
  Eigen::VectorXd x = init ? *init : Eigen::VectorXd::Zero(dict.size());
  detail::check_transport_args(dict, x, z, "fista_infer");

  const double l1 = cfg.l1_weight;
  auto composite = [l1](double smooth, const Eigen::VectorXd& c) { return smooth + l1 * c.lpNorm<1>(); };

  double fx = smooth_value(dict, z, target, x);
  if (!std::isfinite(fx)) throw DivergenceError("fista_infer: non-finite loss", 0);
  double obj_x = composite(fx, x);
  Eigen::VectorXd y = x;
  double t = 1.0;
  double lipschitz = cfg.initial_lipschitz;

  FistaResult res;
  int k = 1;
  for (; k <= cfg.max_iters; ++k) {
    const ValueGrad vg = smooth_value_and_grad(dict, z, target, y);
    if (!std::isfinite(vg.value) || !vg.grad.allFinite()) {
      throw DivergenceError("fista_infer: non-finite loss", static_cast<std::size_t>(k));
    }
    Eigen::VectorXd p;
    double fp = 0.0;
    for (int bt = 0;; ++bt) {
      p = soft_threshold(y - vg.grad / lipschitz, l1 / lipschitz);
      if (!p.allFinite()) throw DivergenceError("fista_infer: non-finite iterate", static_cast<std::size_t>(k));
      fp = smooth_value(dict, z, target, p);
      const Eigen::VectorXd step = p - y;
      if (std::isfinite(fp) && fp <= vg.value + vg.grad.dot(step) + 0.5 * lipschitz * step.squaredNorm()) break;
      lipschitz *= cfg.backtrack_factor;
      if (bt > 200 || !std::isfinite(lipschitz)) {
        throw DivergenceError("fista_infer: backtracking failed", static_cast<std::size_t>(k));
      }
    }
    const double obj_p = composite(fp, p);
    if (cfg.restart && obj_p > obj_x) {
      // Momentum overshot; retry as a plain proximal step from x.
      if (y == x) {
        break;
      }
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double change = (p - x).norm();
    y = p + ((t - 1.0) / t_next) * (p - x);
    x = std::move(p);
    fx = fp;
    obj_x = obj_p;
    t = t_next;
    if (change <= cfg.tol * std::max(1.0, x.norm())) break;
  }
  res.c = std::move(x);
  res.smooth_loss = fx;
  res.objective = obj_x;
  res.iterations = std::min(k, cfg.max_iters);
  return res;
}

LaplacianSample sample_laplacian(const LaplacianParams& params, Rng& rng) {
  const Index m = params.size();
  LaplacianSample s{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (Index i = 0; i < m; ++i) {
    // eps in the open interval (-1/2, 1/2)
    double u = uniform01(rng);
    while (u == 0.0) u = uniform01(rng);
    const double eps = u - 0.5;
    const double sgn = eps > 0.0 ? 1.0 : (eps < 0.0 ? -1.0 : 0.0);
    s.unit[i] = sgn * std::log1p(-2.0 * std::abs(eps));
    s.value[i] = params.shift[i] + params.scale[i] * s.unit[i];
  }
  return s;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& s, double zeta) {
  if (!(zeta >= 0.0)) throw std::invalid_argument("soft_threshold: zeta must be >= 0");
  Eigen::VectorXd out(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    const double mag = std::abs(s[i]) - zeta;
    out[i] = mag > 0.0 ? std::copysign(mag, s[i]) : 0.0;
  }
  return out;
}

BestOfMany best_of_many(const OperatorDictionaryd& dict, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                        const LaplacianParams& params, const VariationalConfig& cfg, Rng& rng) {
  validate(cfg);
  if (params.size() != dict.size()) throw std::invalid_argument("best_of_many: parameter count mismatch");
  BestOfMany best;
  best.loss = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int j = 0; j < cfg.samples; ++j) {
    LaplacianSample s = sample_laplacian(params, rng);
    Eigen::VectorXd c = cfg.use_threshold ? StraightThrough::apply(s.value, cfg.zeta).value : s.value;
    if (!c.allFinite()) continue;
    const double loss = manifold_loss_value(dict, z, target, c);
    if (!found || loss < best.loss) {
      best.c = std::move(c);
      best.sample = std::move(s);
      best.index = j;
      best.loss = loss;
      found = std::isfinite(loss);
    }
  }
  if (!found) throw DivergenceError("best_of_many: every sample produced a non-finite loss", 0);
  return best;
}

LaplacianGrad reparam_backward(const LaplacianSample& sample, const Eigen::VectorXd& grad_sample) {
  return {grad_sample, grad_sample.cwiseProduct(sample.unit)};
}

KlResult kl_laplacian(const LaplacianParams& q, const LaplacianParams& p) {
  const Index m = q.size();
  if (p.size() != m || q.scale.size() != m || p.scale.size() != m) {
    throw std::invalid_argument("kl_laplacian: parameter sizes differ");
  }
  if (!(q.scale.array() > 0.0).all() || !(p.scale.array() > 0.0).all()) {
    throw std::invalid_argument("kl_laplacian: scales must be positive");
  }
  KlResult r;
  r.q = {Eigen::VectorXd(m), Eigen::VectorXd(m)};
  r.p = {Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (Index i = 0; i < m; ++i) {
    const double bq = q.scale[i];
    const double bp = p.scale[i];
    const double delta = q.shift[i] - p.shift[i];
    const double ad = std::abs(delta);
    const double decay = std::exp(-ad / bq);
    r.value += std::log(bp / bq) + (bq * decay + ad) / bp - 1.0;
    const double d_delta = (delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0)) * (1.0 - decay) / bp;
    r.q.shift[i] = d_delta;
    r.p.shift[i] = -d_delta;
    r.q.scale[i] = -1.0 / bq + decay * (1.0 + ad / bq) / bp;
    r.p.scale[i] = 1.0 / bp - (bq * decay + ad) / (bp * bp);
  }
  return r;
}

}  // namespace vlgo
