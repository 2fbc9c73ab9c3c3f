#pragma once

// Lie group operator dictionary: transport maps expm(sum_m c_m Psi_m), the
// pairwise manifold reconstruction loss and its analytic gradients.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlgo/expm.hpp"
#include "vlgo/rng.hpp"
#include "vlgo/types.hpp"

namespace vlgo {

/// M generators acting on d-dimensional features. Each generator is
/// block-diagonal with d/b blocks of size b; b == d is the unfactored case.
template <typename Scalar>
class OperatorDictionary {
 public:
  using Op = BlockDiagMatrix<Scalar>;

  OperatorDictionary() = default;

  OperatorDictionary(Index num_ops, Index dim, Index block_size)
      : dim_(dim), block_size_(block_size) {
    if (num_ops < 1) throw std::invalid_argument("OperatorDictionary: need at least one operator");
    if (dim < 1 || block_size < 1 || dim % block_size != 0) {
      throw std::invalid_argument("OperatorDictionary: block size " + std::to_string(block_size) +
                                  " must divide feature dim " + std::to_string(dim));
    }
    ops_.assign(static_cast<std::size_t>(num_ops), Op(dim / block_size, block_size));
  }

  [[nodiscard]] Index size() const noexcept { return static_cast<Index>(ops_.size()); }
  [[nodiscard]] Index dim() const noexcept { return dim_; }
  [[nodiscard]] Index block_size() const noexcept { return block_size_; }
  [[nodiscard]] Index num_blocks() const noexcept { return block_size_ == 0 ? 0 : dim_ / block_size_; }
  [[nodiscard]] Index num_params() const noexcept { return size() * num_blocks() * block_size_ * block_size_; }

  [[nodiscard]] Op& op(Index m) { return ops_[static_cast<std::size_t>(m)]; }
  [[nodiscard]] const Op& op(Index m) const { return ops_[static_cast<std::size_t>(m)]; }

  /// sum_m c_m Psi^j_m for block j.
  template <typename DerivedC>
  [[nodiscard]] Matrix<Scalar> generator(const Eigen::MatrixBase<DerivedC>& c, Index j) const {
    Matrix<Scalar> a = Matrix<Scalar>::Zero(block_size_, block_size_);
    for (Index m = 0; m < size(); ++m) {
      if (c[m] != Scalar(0)) a += c[m] * op(m).block(j);
    }
    return a;
  }

  /// Parameters in (operator, block, column-major entry) order.
  [[nodiscard]] Vector<Scalar> flat() const {
    Vector<Scalar> out(num_params());
    Index k = 0;
    const Index bb = block_size_ * block_size_;
    for (const auto& o : ops_) {
      for (const auto& blk : o.blocks()) {
        out.segment(k, bb) = Eigen::Map<const Vector<Scalar>>(blk.data(), bb);
        k += bb;
      }
    }
    return out;
  }

  template <typename Derived>
  void assign_flat(const Eigen::MatrixBase<Derived>& v) {
    if (v.size() != num_params()) {
      throw std::invalid_argument("OperatorDictionary::assign_flat: wrong parameter count");
    }
    Index k = 0;
    const Index bb = block_size_ * block_size_;
    for (auto& o : ops_) {
      for (Index j = 0; j < o.num_blocks(); ++j) {
        Eigen::Map<Vector<Scalar>>(o.block(j).data(), bb) = v.segment(k, bb);
        k += bb;
      }
    }
  }

  /// Same shape, all entries zero.
  [[nodiscard]] OperatorDictionary zeros_like() const {
    return OperatorDictionary(size(), dim_, block_size_);
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& o : ops_) {
      if (!o.all_finite()) return false;
    }
    return true;
  }

 private:
  Index dim_ = 0;
  Index block_size_ = 0;
  std::vector<Op> ops_;
};

using OperatorDictionaryd = OperatorDictionary<double>;

namespace detail {

template <typename Scalar, typename DerivedC, typename DerivedZ>
void check_transport_args(const OperatorDictionary<Scalar>& dict, const Eigen::MatrixBase<DerivedC>& c,
                          const Eigen::MatrixBase<DerivedZ>& z, const char* who) {
  if (c.size() != dict.size()) {
    throw std::invalid_argument(std::string(who) + ": coefficient count " + std::to_string(c.size()) +
                                " != dictionary size " + std::to_string(dict.size()));
  }
  if (z.size() != dict.dim()) {
    throw std::invalid_argument(std::string(who) + ": feature dim " + std::to_string(z.size()) +
                                " != dictionary dim " + std::to_string(dict.dim()));
  }
}

}  // namespace detail

/// Per-block group elements T_{Psi^j}(c).
template <typename Scalar, typename DerivedC>
[[nodiscard]] BlockDiagMatrix<Scalar> transport_matrix(const OperatorDictionary<Scalar>& dict,
                                                       const Eigen::MatrixBase<DerivedC>& c) {
  if (c.size() != dict.size()) throw std::invalid_argument("transport_matrix: coefficient count mismatch");
  std::vector<Matrix<Scalar>> blocks;
  blocks.reserve(static_cast<std::size_t>(dict.num_blocks()));
  for (Index j = 0; j < dict.num_blocks(); ++j) blocks.push_back(expm(dict.generator(c, j)));
  return BlockDiagMatrix<Scalar>(std::move(blocks));
}

/// T_Psi(c) z, evaluated block by block.
template <typename Scalar, typename DerivedC, typename DerivedZ>
[[nodiscard]] Vector<Scalar> transport(const OperatorDictionary<Scalar>& dict,
                                       const Eigen::MatrixBase<DerivedC>& c,
                                       const Eigen::MatrixBase<DerivedZ>& z) {
  detail::check_transport_args(dict, c, z, "transport");
  const Index b = dict.block_size();
  Vector<Scalar> out(dict.dim());
  for (Index j = 0; j < dict.num_blocks(); ++j) {
    out.segment(j * b, b).noalias() = expm(dict.generator(c, j)) * z.segment(j * b, b);
  }
  return out;
}

/// Cotangents of y = T_Psi(c) z given dL/dy.
template <typename Scalar>
struct TransportGrad {
  Vector<Scalar> c;
  OperatorDictionary<Scalar> ops;
  Vector<Scalar> z;
};

/// Reverse-mode pass through y = T_Psi(c) z. With H_j = L*(A_j, g_j z_j^T):
/// dL/dc_m = sum_j <H_j, Psi^j_m>, dL/dPsi^j_m = c_m H_j, dL/dz_j = T_j^T g_j.
template <typename Scalar, typename DerivedC, typename DerivedZ, typename DerivedG>
[[nodiscard]] TransportGrad<Scalar> transport_vjp(const OperatorDictionary<Scalar>& dict,
                                                  const Eigen::MatrixBase<DerivedC>& c,
                                                  const Eigen::MatrixBase<DerivedZ>& z,
                                                  const Eigen::MatrixBase<DerivedG>& upstream) {
  detail::check_transport_args(dict, c, z, "transport_vjp");
  if (upstream.size() != dict.dim()) throw std::invalid_argument("transport_vjp: upstream dim mismatch");
  const Index b = dict.block_size();
  TransportGrad<Scalar> g{Vector<Scalar>::Zero(dict.size()), dict.zeros_like(), Vector<Scalar>(dict.dim())};
  for (Index j = 0; j < dict.num_blocks(); ++j) {
    const Matrix<Scalar> a = dict.generator(c, j);
    const Matrix<Scalar> cot = upstream.segment(j * b, b) * z.segment(j * b, b).transpose();
    const Matrix<Scalar> at = a.transpose();
    // value of the adjoint call is exp(A^T) = T_j^T
    const auto fr = expm_frechet(at, cot);
    g.z.segment(j * b, b).noalias() = fr.value * upstream.segment(j * b, b);
    for (Index m = 0; m < dict.size(); ++m) {
      g.c[m] += (fr.derivative.array() * dict.op(m).block(j).array()).sum();
      g.ops.op(m).block(j) = c[m] * fr.derivative;
    }
  }
  return g;
}

template <typename Scalar>
struct ManifoldLoss {
  Scalar value = 0;
  OperatorDictionary<Scalar> grad_ops;
  Vector<Scalar> grad_c;
  Vector<Scalar> grad_z;
  /// Zero when the target is stop-gradded.
  Vector<Scalar> grad_target;
};

/// sum_j || sg(z'_j) - T_{Psi^j}(c) z_j ||^2 over the d/b feature segments.
template <typename Scalar, typename DerivedZ, typename DerivedT, typename DerivedC>
[[nodiscard]] Scalar manifold_loss_value(const OperatorDictionary<Scalar>& dict,
                                         const Eigen::MatrixBase<DerivedZ>& z,
                                         const Eigen::MatrixBase<DerivedT>& target,
                                         const Eigen::MatrixBase<DerivedC>& c) {
  if (target.size() != z.size()) throw std::invalid_argument("manifold_loss: target dim mismatch");
  return (target - transport(dict, c, z)).squaredNorm();
}

template <typename Scalar, typename DerivedZ, typename DerivedT, typename DerivedC>
[[nodiscard]] ManifoldLoss<Scalar> manifold_loss(const OperatorDictionary<Scalar>& dict,
                                                 const Eigen::MatrixBase<DerivedZ>& z,
                                                 const Eigen::MatrixBase<DerivedT>& target,
                                                 const Eigen::MatrixBase<DerivedC>& c,
                                                 bool stop_grad_target) {
  if (target.size() != z.size()) throw std::invalid_argument("manifold_loss: target dim mismatch");
  const Vector<Scalar> residual = transport(dict, c, z) - target;
  const Vector<Scalar> upstream = Scalar(2) * residual;
  TransportGrad<Scalar> tg = transport_vjp(dict, c, z, upstream);
  ManifoldLoss<Scalar> out;
  out.value = residual.squaredNorm();
  out.grad_ops = std::move(tg.ops);
  out.grad_c = std::move(tg.c);
  out.grad_z = std::move(tg.z);
  out.grad_target = stop_grad_target ? Vector<Scalar>::Zero(z.size()) : Vector<Scalar>(-upstream);
  return out;
}

/// Eigen-structured initialization: each b x b block is built from 2x2 cells
/// [[alpha, beta], [-beta, alpha]] whose eigenvalues are alpha +/- i beta.
struct InitConfig {
  double alpha = 1.0e-4;
  double beta_eig = 6.0;
  /// Std of i.i.d. Gaussian noise added to every entry (0 keeps the exact form).
  double jitter_sd = 0.0;
  /// Allow odd block sizes by ending each block with a 1x1 cell equal to alpha.
  bool odd_trailing_cell = false;
};

[[nodiscard]] OperatorDictionaryd init_dictionary(Index num_ops, Index dim, Index block_size,
                                                  const InitConfig& cfg, Rng& rng);

/// ||z' - T(c) z||^2 / ||z' - z||^2. Throws UndefinedRatioError when z == z'.
template <typename Scalar, typename DerivedZ, typename DerivedT, typename DerivedC>
[[nodiscard]] Scalar distance_improvement(const OperatorDictionary<Scalar>& dict,
                                          const Eigen::MatrixBase<DerivedZ>& z,
                                          const Eigen::MatrixBase<DerivedT>& target,
                                          const Eigen::MatrixBase<DerivedC>& c) {
  const Scalar before = (target - z).squaredNorm();
  if (before == Scalar(0)) throw UndefinedRatioError("distance_improvement: z and z' coincide");
  return manifold_loss_value(dict, z, target, c) / before;
}

/// sum_m ||Psi_m||_F^2.
template <typename Scalar>
[[nodiscard]] Scalar frobenius_penalty(const OperatorDictionary<Scalar>& dict) {
  Scalar s = 0;
  for (Index m = 0; m < dict.size(); ++m) s += dict.op(m).squared_norm();
  return s;
}

template <typename Scalar>
[[nodiscard]] Vector<Scalar> operator_norms(const OperatorDictionary<Scalar>& dict) {
  Vector<Scalar> out(dict.size());
  for (Index m = 0; m < dict.size(); ++m) out[m] = std::sqrt(dict.op(m).squared_norm());
  return out;
}

/// Global-norm clipping followed by a decoupled-weight-decay SGD step:
/// w <- (1 - lr * wd) w - lr * clip(g).
[[nodiscard]] OperatorDictionaryd grad_clip_and_step(const OperatorDictionaryd& dict,
                                                     const OperatorDictionaryd& grads, double lr,
                                                     double clip_norm, double weight_decay);

}  // namespace vlgo
