#include "vlgo/check_grads.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

#include "vlgo/contrastive.hpp"
#include "vlgo/expm.hpp"
#include "vlgo/metrics_io.hpp"
#include "vlgo/networks.hpp"
#include "vlgo/operator_dict.hpp"
#include "vlgo/sparse_inference.hpp"

namespace vlgo {

namespace {

constexpr double kStep = 1e-5;

Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double h = kStep * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double rel_error(Eigen::VectorXd analytic, const Eigen::VectorXd& numeric, double perturb) {
  if (analytic.size() > 0) analytic[0] += perturb;
  const double denom = std::max(numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / denom;
}

Eigen::MatrixXd gaussian(Index r, Index c, Rng& rng, double sd = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) m(i, j) = sd * standard_normal(rng);
  }
  return m;
}

Eigen::VectorXd gaussian_vec(Index n, Rng& rng, double sd = 1.0) { return gaussian(n, 1, rng, sd); }

OperatorDictionaryd random_dict(Index m, Index d, Index b, Rng& rng, double sd) {
  OperatorDictionaryd dict(m, d, b);
  dict.assign_flat(gaussian_vec(dict.num_params(), rng, sd));
  return dict;
}

class Recorder {
 public:
  explicit Recorder(double perturb) : perturb_(perturb) {}

  void add(const std::string& name, double tol, double err) {
    auto it = std::find_if(checks_.begin(), checks_.end(), [&](const GradCheck& c) { return c.name == name; });
    if (it == checks_.end()) {
      checks_.push_back({name, 0.0, tol, true});
      it = checks_.end() - 1;
    }
    it->max_error = std::isfinite(err) ? std::max(it->max_error, err) : std::numeric_limits<double>::infinity();
    it->passed = std::isfinite(it->max_error) && it->max_error < tol;
  }

  void gradient(const std::string& name, double tol, const Eigen::VectorXd& analytic,
                const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
    add(name, tol, rel_error(analytic, central_diff(f, x), perturb_));
  }

  [[nodiscard]] double perturb() const noexcept { return perturb_; }
  [[nodiscard]] std::vector<GradCheck> take() { return std::move(checks_); }

 private:
  double perturb_;
  std::vector<GradCheck> checks_;
};

void check_expm(Recorder& rec, Rng& rng) {
  const double theta = 6.0 * (uniform01(rng) - 0.5);
  Eigen::Matrix2d a;
  a << 0.0, -theta, theta, 0.0;
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  Eigen::Matrix2d e = expm(a);
  e(0, 0) += rec.perturb();
  rec.add("expm_rotation_closed_form", 1e-10, (e - rot).cwiseAbs().maxCoeff());

  const Index n = 4;
  const Eigen::MatrixXd am = gaussian(n, n, rng, 0.7);
  const Eigen::MatrixXd dir = gaussian(n, n, rng);
  const auto fr = expm_frechet(am, dir);
  const double h = 1e-5;
  const Eigen::MatrixXd fd = (expm(Eigen::MatrixXd(am + h * dir)) - expm(Eigen::MatrixXd(am - h * dir))) / (2.0 * h);
  rec.add("expm_frechet_vs_central_diff", 1e-6,
          rel_error(Eigen::Map<const Eigen::VectorXd>(fr.derivative.data(), n * n),
                    Eigen::Map<const Eigen::VectorXd>(fd.data(), n * n), rec.perturb()));

  const Eigen::MatrixXd g = gaussian(n, n, rng);
  const double lhs = (g.array() * fr.derivative.array()).sum() + rec.perturb();
  const double rhs = (expm_vjp(am, g).array() * dir.array()).sum();
  rec.add("expm_adjoint_identity", 1e-8, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
}

void check_manifold_loss(Recorder& rec, Rng& rng) {
  const Index m = 3;
  const Index d = 6;
  const Index b = 3;
  const OperatorDictionaryd dict = random_dict(m, d, b, rng, 0.4);
  const Eigen::VectorXd z = gaussian_vec(d, rng);
  const Eigen::VectorXd t = gaussian_vec(d, rng);
  const Eigen::VectorXd c = gaussian_vec(m, rng, 0.5);
  const ManifoldLoss<double> ml = manifold_loss(dict, z, t, c, false);

  rec.gradient("manifold_loss_grad_ops", 1e-5, ml.grad_ops.flat(),
               [&](const Eigen::VectorXd& p) {
                 OperatorDictionaryd dd = dict;
                 dd.assign_flat(p);
                 return manifold_loss_value(dd, z, t, c);
               },
               dict.flat());
  rec.gradient("manifold_loss_grad_c", 1e-5, ml.grad_c,
               [&](const Eigen::VectorXd& x) { return manifold_loss_value(dict, z, t, x); }, c);
  rec.gradient("manifold_loss_grad_z", 1e-5, ml.grad_z,
               [&](const Eigen::VectorXd& x) { return manifold_loss_value(dict, x, t, c); }, z);
  rec.gradient("manifold_loss_grad_target", 1e-5, ml.grad_target,
               [&](const Eigen::VectorXd& x) { return manifold_loss_value(dict, z, x, c); }, t);

  // One block (b = d) must agree with the dense formula.
  const OperatorDictionaryd full = random_dict(m, d, d, rng, 0.4);
  Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(d, d);
  for (Index k = 0; k < m; ++k) gen += c[k] * full.op(k).to_dense();
  const double dense = (t - expm(gen) * z).squaredNorm();
  const double blocked = manifold_loss_value(full, z, t, c) + rec.perturb();
  rec.add("block_diag_dense_equivalence", 1e-12, std::abs(blocked - dense) / std::max(1.0, dense));
}

void check_transport(Recorder& rec, Rng& rng) {
  const OperatorDictionaryd dict = random_dict(3, 6, 3, rng, 0.5);
  const Eigen::VectorXd z = gaussian_vec(6, rng);
  const Eigen::VectorXd c = gaussian_vec(3, rng);
  const Eigen::VectorXd back = transport(dict, Eigen::VectorXd(-c), transport(dict, c, z));
  rec.add("transport_inverse_round_trip", 1e-8, (back - z).norm() / z.norm() + std::abs(rec.perturb()));

  OperatorDictionaryd rot(1, 4, 4);
  const Eigen::MatrixXd s = gaussian(4, 4, rng);
  rot.op(0).block(0) = s - s.transpose();
  std::vector<double> grid;
  for (int k = -10; k <= 10; ++k) grid.push_back(0.5 * k);
  const Eigen::MatrixXd path = operator_paths(rot, z.head(4), 0, grid);
  const double r0 = z.head(4).norm();
  double worst = 0.0;
  for (Index i = 0; i < path.rows(); ++i) worst = std::max(worst, std::abs(path.row(i).norm() - r0) / r0);
  rec.add("antisymmetric_path_constant_radius", 1e-8, worst + std::abs(rec.perturb()));
}

void check_mlp(Recorder& rec, Rng& rng) {
  for (HeadType head : {HeadType::plain, HeadType::laplacian, HeadType::normalized}) {
    MlpConfig mc;
    mc.dims = {5, 7, 6, 4};
    mc.head = head;
    const MlpNet net(mc, rng);
    const Eigen::MatrixXd x = gaussian(3, 5, rng);
    const Eigen::MatrixXd w = gaussian(3, 4, rng);
    auto loss = [&](const MlpNet& nn, const Eigen::MatrixXd& xx) {
      return (mlp_forward(nn, xx).value.array() * w.array()).sum();
    };
    const MlpOutput fw = mlp_forward(net, x);
    const MlpGrad g = mlp_backward(net, fw.cache, w);
    const std::string tag = head == HeadType::plain ? "plain" : head == HeadType::laplacian ? "laplacian" : "normalized";
    rec.gradient("mlp_" + tag + "_params", 1e-5, g.params,
                 [&](const Eigen::VectorXd& p) {
                   MlpNet nn = net;
                   nn.set_params(p);
                   return loss(nn, x);
                 },
                 net.params());
    rec.gradient("mlp_" + tag + "_input", 1e-5, Eigen::Map<const Eigen::VectorXd>(g.input.data(), g.input.size()),
                 [&](const Eigen::VectorXd& v) { return loss(net, Eigen::Map<const Eigen::MatrixXd>(v.data(), 3, 5)); },
                 Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()));
  }

  MlpConfig mc;
  mc.dims = {4, 6, 3};
  const MlpNet net(mc, rng);
  const Eigen::MatrixXd x = gaussian(5, 4, rng);
  const std::vector<int> y{0, 2, 1, 1, 0};
  const MlpOutput fw = mlp_forward(net, x);
  const CrossEntropy ce = cross_entropy(fw.value, y, 5.0);
  rec.gradient("cross_entropy_params", 1e-5, mlp_backward(net, fw.cache, ce.grad).params,
               [&](const Eigen::VectorXd& p) {
                 MlpNet nn = net;
                 nn.set_params(p);
                 return cross_entropy(mlp_forward(nn, x).value, y, 5.0).value;
               },
               net.params());
}

double kl_quadrature(double mq, double bq, double mp, double bp) {
  auto f = [&](double x) {
    const double lq = -std::log(2.0 * bq) - std::abs(x - mq) / bq;
    const double lp = -std::log(2.0 * bp) - std::abs(x - mp) / bp;
    return std::exp(lq) * (lq - lp);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double inf = std::numeric_limits<double>::infinity();
  const double lo = std::min(mq, mp);
  const double hi = std::max(mq, mp);
  double total = GK::integrate(f, -inf, lo, 15, 1e-14) + GK::integrate(f, hi, inf, 15, 1e-14);
  if (hi > lo) total += GK::integrate(f, lo, hi, 15, 1e-14);
  return total;
}

void check_kl(Recorder& rec, Rng& rng) {
  const Index m = 3;
  LaplacianParams q{gaussian_vec(m, rng, 0.5), (gaussian_vec(m, rng, 0.3).array().exp() * 0.5).matrix()};
  LaplacianParams p{gaussian_vec(m, rng, 0.5), (gaussian_vec(m, rng, 0.3).array().exp() * 0.5).matrix()};
  const KlResult kl = kl_laplacian(q, p);
  double quad = 0.0;
  for (Index i = 0; i < m; ++i) quad += kl_quadrature(q.shift[i], q.scale[i], p.shift[i], p.scale[i]);
  rec.add("kl_laplacian_vs_quadrature", 1e-6, std::abs(kl.value + rec.perturb() - quad) / std::max(1.0, quad));

  Eigen::VectorXd all(4 * m);
  all << q.shift, q.scale, p.shift, p.scale;
  Eigen::VectorXd grad(4 * m);
  grad << kl.q.shift, kl.q.scale, kl.p.shift, kl.p.scale;
  rec.gradient("kl_laplacian_grads", 1e-5, grad,
               [&](const Eigen::VectorXd& v) {
                 return kl_laplacian({v.segment(0, m), v.segment(m, m)}, {v.segment(2 * m, m), v.segment(3 * m, m)})
                     .value;
               },
               all);

  // Reparameterized sample through a quadratic readout.
  const LaplacianSample s = sample_laplacian(q, rng);
  const Eigen::VectorXd w = gaussian_vec(m, rng);
  const LaplacianGrad rg = reparam_backward(s, w);
  Eigen::VectorXd qp(2 * m);
  qp << q.shift, q.scale;
  Eigen::VectorXd qg(2 * m);
  qg << rg.shift, rg.scale;
  rec.gradient("reparam_sample_grads", 1e-5, qg,
               [&](const Eigen::VectorXd& v) {
                 return w.dot(v.head(m) + v.tail(m).cwiseProduct(s.unit));
               },
               qp);
}

void check_info_nce(Recorder& rec, Rng& rng) {
  for (DistanceKind dist : {DistanceKind::squared, DistanceKind::normalized}) {
    ContrastiveConfig cfg;
    cfg.distance = dist;
    cfg.temperature = 0.5;
    const Index n = 4;
    const Index d = 3;
    const Eigen::MatrixXd a = gaussian(n, d, rng);
    const Eigen::MatrixXd p = gaussian(n, d, rng);
    const Eigen::MatrixXd cl = gaussian(n, d, rng);
    const BatchInfoNce r = info_nce_batch(a, p, cl, cfg);
    Eigen::VectorXd all(3 * n * d);
    all << Eigen::Map<const Eigen::VectorXd>(a.data(), n * d), Eigen::Map<const Eigen::VectorXd>(p.data(), n * d),
        Eigen::Map<const Eigen::VectorXd>(cl.data(), n * d);
    Eigen::VectorXd grad(3 * n * d);
    grad << Eigen::Map<const Eigen::VectorXd>(r.grad_anchors.data(), n * d),
        Eigen::Map<const Eigen::VectorXd>(r.grad_positives.data(), n * d),
        Eigen::Map<const Eigen::VectorXd>(r.grad_clean.data(), n * d);
    const std::string tag = dist == DistanceKind::squared ? "squared" : "normalized";
    rec.gradient("info_nce_" + tag + "_grads", 1e-5, grad,
                 [&](const Eigen::VectorXd& v) {
                   const Eigen::Map<const Eigen::MatrixXd> aa(v.data(), n, d);
                   const Eigen::Map<const Eigen::MatrixXd> pp(v.data() + n * d, n, d);
                   const Eigen::Map<const Eigen::MatrixXd> cc(v.data() + 2 * n * d, n, d);
                   return info_nce_batch(aa, pp, cc, cfg).value;
                 },
                 all);
  }
}

}  // namespace

std::vector<GradCheck> run_gradient_checks(const CheckGradsConfig& cfg) {
  Recorder rec(cfg.perturb);
  for (int t = 0; t < std::max(1, cfg.trials); ++t) {
    Rng rng = make_rng(cfg.seed, {0xc4ec, static_cast<std::uint64_t>(t)});
    check_expm(rec, rng);
    check_manifold_loss(rec, rng);
    check_transport(rec, rng);
    check_mlp(rec, rng);
    check_kl(rec, rng);
    check_info_nce(rec, rng);
  }
  return rec.take();
}

std::string format_check_table(const std::vector<GradCheck>& checks) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-36s %14s %10s  %s\n", "check", "max_error", "tolerance", "result");
  os << line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-36s %14.3e %10.0e  %s\n", c.name.c_str(), c.max_error, c.tolerance,
                  c.passed ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace vlgo
