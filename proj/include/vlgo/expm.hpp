#pragma once

// Matrix exponential by scaling and squaring with diagonal Pade approximants,
// its Frechet derivative and the adjoint of that derivative.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "vlgo/types.hpp"

namespace vlgo {

namespace detail {

template <typename Derived>
void require_square_finite(const Eigen::MatrixBase<Derived>& a, const char* who) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw std::invalid_argument(std::string(who) + ": matrix must be square and non-empty");
  }
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": matrix has non-finite entries");
  }
}

template <typename Scalar>
struct PadeThetas;

// Largest 1-norms for which the degree 3/5/7/9/13 approximant reaches unit
// roundoff without scaling.
template <>
struct PadeThetas<double> {
  static constexpr std::array<double, 5> value{1.495585217958292e-2, 2.539398330063230e-1,
                                               9.504178996162932e-1, 2.097847961257068e0,
                                               5.371920351148152e0};
};

template <>
struct PadeThetas<long double> : PadeThetas<double> {};

template <>
struct PadeThetas<float> {
  static constexpr std::array<double, 5> value{4.258730016922831e-1, 1.880152677804762e0,
                                               3.925724783138660e0, 3.925724783138660e0,
                                               3.925724783138660e0};
};

// Fills U (odd part) and V (even part) of the degree-m approximant.
template <typename Mat>
void pade_terms(const Mat& a, int m, Mat& u, Mat& v) {
  using Scalar = typename Mat::Scalar;
  const Index n = a.rows();
  const Mat ident = Mat::Identity(n, n);
  const Mat a2 = a * a;
  switch (m) {
    case 3: {
      constexpr std::array<double, 4> b{120., 60., 12., 1.};
      u.noalias() = a * (Scalar(b[3]) * a2 + Scalar(b[1]) * ident);
      v = Scalar(b[2]) * a2 + Scalar(b[0]) * ident;
      return;
    }
    case 5: {
      constexpr std::array<double, 6> b{30240., 15120., 3360., 420., 30., 1.};
      const Mat a4 = a2 * a2;
      u.noalias() = a * (Scalar(b[5]) * a4 + Scalar(b[3]) * a2 + Scalar(b[1]) * ident);
      v = Scalar(b[4]) * a4 + Scalar(b[2]) * a2 + Scalar(b[0]) * ident;
      return;
    }
    case 7: {
      constexpr std::array<double, 8> b{17297280., 8648640., 1995840., 277200.,
                                        25200.,    1512.,    56.,      1.};
      const Mat a4 = a2 * a2;
      const Mat a6 = a4 * a2;
      u.noalias() = a * (Scalar(b[7]) * a6 + Scalar(b[5]) * a4 + Scalar(b[3]) * a2 +
                         Scalar(b[1]) * ident);
      v = Scalar(b[6]) * a6 + Scalar(b[4]) * a4 + Scalar(b[2]) * a2 + Scalar(b[0]) * ident;
      return;
    }
    case 9: {
      constexpr std::array<double, 10> b{17643225600., 8821612800., 2075673600., 302702400.,
                                         30270240.,    2162160.,    110880.,     3960.,
                                         90.,          1.};
      const Mat a4 = a2 * a2;
      const Mat a6 = a4 * a2;
      const Mat a8 = a6 * a2;
      u.noalias() = a * (Scalar(b[9]) * a8 + Scalar(b[7]) * a6 + Scalar(b[5]) * a4 +
                         Scalar(b[3]) * a2 + Scalar(b[1]) * ident);
      v = Scalar(b[8]) * a8 + Scalar(b[6]) * a6 + Scalar(b[4]) * a4 + Scalar(b[2]) * a2 +
          Scalar(b[0]) * ident;
      return;
    }
    default: {
      constexpr std::array<double, 14> b{
          64764752532480000., 32382376266240000., 7771770303897600., 1187353796428800.,
          129060195264000.,   10559470521600.,    670442572800.,     33522128640.,
          1323241920.,        40840800.,          960960.,           16380.,
          182.,               1.};
      const Mat a4 = a2 * a2;
      const Mat a6 = a4 * a2;
      Mat tmp = Scalar(b[13]) * a6 + Scalar(b[11]) * a4 + Scalar(b[9]) * a2;
      Mat inner = a6 * tmp;
      inner += Scalar(b[7]) * a6 + Scalar(b[5]) * a4 + Scalar(b[3]) * a2 + Scalar(b[1]) * ident;
      u.noalias() = a * inner;
      tmp = Scalar(b[12]) * a6 + Scalar(b[10]) * a4 + Scalar(b[8]) * a2;
      v.noalias() = a6 * tmp;
      v += Scalar(b[6]) * a6 + Scalar(b[4]) * a4 + Scalar(b[2]) * a2 + Scalar(b[0]) * ident;
      return;
    }
  }
}

}  // namespace detail

/// e^A by scaling and squaring: picks the cheapest Pade degree in
/// {3, 5, 7, 9, 13} that is accurate for the 1-norm of A, otherwise scales A
/// by 2^-s so the degree-13 approximant applies, then squares s times.
///
/// Throws std::invalid_argument if A is not square or has non-finite entries.
template <typename Derived>
[[nodiscard]] typename Derived::PlainObject expm(const Eigen::MatrixBase<Derived>& a_in) {
  using Plain = typename Derived::PlainObject;
  using Scalar = typename Derived::Scalar;
  static_assert(std::is_floating_point_v<Scalar>, "expm requires a real floating-point scalar");
  detail::require_square_finite(a_in, "expm");

  constexpr auto thetas = detail::PadeThetas<Scalar>::value;
  constexpr std::array<int, 5> degrees{3, 5, 7, 9, 13};
  constexpr int max_unscaled = std::is_same_v<Scalar, float> ? 3 : 5;

  Plain a = a_in;
  const double norm1 = static_cast<double>(a.cwiseAbs().colwise().sum().maxCoeff());
  Plain u(a.rows(), a.cols());
  Plain v(a.rows(), a.cols());
  int squarings = 0;

  int degree = 0;
  for (int k = 0; k < max_unscaled - 1; ++k) {
    if (norm1 <= thetas[k]) {
      degree = degrees[k];
      break;
    }
  }
  if (degree == 0) {
    const double top = thetas[max_unscaled - 1];
    degree = degrees[max_unscaled - 1];
    if (norm1 > top) {
      squarings = static_cast<int>(std::ceil(std::log2(norm1 / top)));
      a *= Scalar(std::ldexp(1.0, -squarings));
    }
  }
  detail::pade_terms(a, degree, u, v);

  Plain result = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) {
    result = (result * result).eval();
  }
  return result;
}

/// Value and Frechet derivative of the exponential at A in direction E.
template <typename Scalar, int Rows>
struct ExpmFrechet {
  Eigen::Matrix<Scalar, Rows, Rows> value;
  Eigen::Matrix<Scalar, Rows, Rows> derivative;
};

/// Returns (e^A, L(A, E)) where L(A, E) is read off the upper-right block of
/// exp([[A, E], [0, A]]). E is rescaled to the magnitude of A before the
/// augmented exponential and the derivative scaled back afterwards, which
/// keeps the scaling-and-squaring step count independent of |E|.
template <typename DerivedA, typename DerivedE>
[[nodiscard]] auto expm_frechet(const Eigen::MatrixBase<DerivedA>& a,
                                const Eigen::MatrixBase<DerivedE>& e) {
  using Scalar = typename DerivedA::Scalar;
  constexpr int rows = DerivedA::RowsAtCompileTime;
  constexpr int aug_rows = rows == Eigen::Dynamic ? Eigen::Dynamic : 2 * rows;
  using Aug = Eigen::Matrix<Scalar, aug_rows, aug_rows>;

  detail::require_square_finite(a, "expm_frechet");
  if (e.rows() != a.rows() || e.cols() != a.cols()) {
    throw std::invalid_argument("expm_frechet: direction has a different shape than A");
  }
  if (!e.allFinite()) {
    throw std::invalid_argument("expm_frechet: direction has non-finite entries");
  }

  const Index n = a.rows();
  const Scalar e_norm = e.cwiseAbs().colwise().sum().maxCoeff();
  const Scalar a_norm = a.cwiseAbs().colwise().sum().maxCoeff();
  Scalar scale = Scalar(1);
  if (e_norm > Scalar(0)) {
    scale = std::max(a_norm, Scalar(1)) / e_norm;
  }

  Aug aug = Aug::Zero(2 * n, 2 * n);
  aug.topLeftCorner(n, n) = a;
  aug.bottomRightCorner(n, n) = a;
  aug.topRightCorner(n, n) = scale * e;
  const Aug full = expm(aug);

  ExpmFrechet<Scalar, rows> out;
  out.value = full.topLeftCorner(n, n);
  out.derivative = full.topRightCorner(n, n) / scale;
  return out;
}

/// Adjoint of the Frechet derivative under the Frobenius inner product:
/// <G, L(A, E)> = <L*(A, G), E> for every E, with L*(A, G) = L(A^T, G).
template <typename DerivedA, typename DerivedG>
[[nodiscard]] auto expm_vjp(const Eigen::MatrixBase<DerivedA>& a,
                            const Eigen::MatrixBase<DerivedG>& g) {
  if (g.rows() != a.rows() || g.cols() != a.cols()) {
    throw std::invalid_argument("expm_vjp: cotangent has a different shape than A");
  }
  using Plain = typename DerivedA::PlainObject;
  Plain at = a.transpose();
  return expm_frechet(at, g).derivative;
}

/// Block-diagonal matrix stored as its diagonal blocks; all blocks share a size.
template <typename Scalar>
class BlockDiagMatrix {
 public:
  using Block = Matrix<Scalar>;

  BlockDiagMatrix() = default;

  BlockDiagMatrix(Index num_blocks, Index block_size)
      : block_size_(block_size), blocks_(static_cast<std::size_t>(num_blocks), Block::Zero(block_size, block_size)) {
    if (num_blocks < 1 || block_size < 1) {
      throw std::invalid_argument("BlockDiagMatrix: need at least one block of size >= 1");
    }
  }

  explicit BlockDiagMatrix(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) {
      throw std::invalid_argument("BlockDiagMatrix: need at least one block");
    }
    block_size_ = blocks_.front().rows();
    for (const auto& b : blocks_) {
      if (b.rows() != block_size_ || b.cols() != block_size_) {
        throw std::invalid_argument("BlockDiagMatrix: blocks must be square with a common size");
      }
    }
  }

  [[nodiscard]] Index block_size() const noexcept { return block_size_; }
  [[nodiscard]] Index num_blocks() const noexcept { return static_cast<Index>(blocks_.size()); }
  [[nodiscard]] Index dim() const noexcept { return block_size_ * num_blocks(); }

  [[nodiscard]] Block& block(Index j) { return blocks_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] const Block& block(Index j) const { return blocks_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }

  [[nodiscard]] Matrix<Scalar> to_dense() const {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(dim(), dim());
    for (Index j = 0; j < num_blocks(); ++j) {
      out.block(j * block_size_, j * block_size_, block_size_, block_size_) = block(j);
    }
    return out;
  }

  [[nodiscard]] Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& b : blocks_) s += b.squaredNorm();
    return s;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& b : blocks_) {
      if (!b.allFinite()) return false;
    }
    return true;
  }

 private:
  Index block_size_ = 0;
  std::vector<Block> blocks_;
};

/// Blockwise exponential.
template <typename Scalar>
[[nodiscard]] BlockDiagMatrix<Scalar> expm(const BlockDiagMatrix<Scalar>& a) {
  std::vector<Matrix<Scalar>> blocks;
  blocks.reserve(static_cast<std::size_t>(a.num_blocks()));
  for (const auto& b : a.blocks()) blocks.push_back(expm(b));
  return BlockDiagMatrix<Scalar>(std::move(blocks));
}

}  // namespace vlgo
