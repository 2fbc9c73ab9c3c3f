#pragma once

// Synthetic data: the 3-D swiss roll with nearest-neighbor pair sampling and
// class-structured smooth manifolds for the toy contrastive runs.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "vlgo/rng.hpp"
#include "vlgo/types.hpp"

namespace vlgo {

struct SwissRoll {
  /// n x 3, one point per row: (t cos t, h, t sin t) + noise.
  Eigen::MatrixXd points;
  Eigen::VectorXd t;
  Eigen::VectorXd h;
};

/// t ~ U(1.5 pi, 4.5 pi), h ~ U(0, 21), isotropic Gaussian noise of sd noise_sd.
[[nodiscard]] SwissRoll swiss_roll(Index n, double noise_sd, std::uint64_t seed);

struct PointPairBatch {
  Eigen::MatrixXd sources;
  Eigen::MatrixXd targets;
  std::vector<Index> anchors;
  std::vector<Index> partners;
  /// Neighbor rank of each partner relative to its anchor (1 = nearest).
  std::vector<Index> ranks;

  [[nodiscard]] Index size() const noexcept { return sources.rows(); }
};

/// Precomputed k-nearest-neighbor lists (Euclidean, ties by point index,
/// the anchor itself excluded) up to a maximum rank.
class NeighborTable {
 public:
  NeighborTable(const Eigen::MatrixXd& points, Index max_rank);

  [[nodiscard]] Index max_rank() const noexcept { return max_rank_; }
  [[nodiscard]] Index num_points() const noexcept { return static_cast<Index>(table_.size()); }
  /// Index of the rank-th nearest neighbor of `anchor`, rank in [1, max_rank].
  [[nodiscard]] Index neighbor(Index anchor, Index rank) const {
    return table_[static_cast<std::size_t>(anchor)][static_cast<std::size_t>(rank - 1)];
  }

  /// batch_size uniformly chosen anchors, each paired with its k-th neighbor
  /// for k uniform in [k_lo, k_hi].
  [[nodiscard]] PointPairBatch sample(const Eigen::MatrixXd& points, Index k_lo, Index k_hi, Index batch_size,
                                      std::uint64_t seed) const;

 private:
  Index max_rank_;
  std::vector<std::vector<Index>> table_;
};

/// Pairs each sampled anchor with a uniformly chosen k-th nearest neighbor,
/// k in [k_lo, k_hi] inclusive. Throws std::invalid_argument when
/// k_lo < 1, k_lo > k_hi or k_hi >= n.
[[nodiscard]] PointPairBatch neighbor_pairs(const Eigen::MatrixXd& points, Index k_lo, Index k_hi, Index batch_size,
                                            std::uint64_t seed);

struct SynthClassConfig {
  /// Number of (cos, sin) feature pairs per class embedding.
  Index frequencies = 4;
  /// Latent extent: each coordinate lies in [0, segment).
  double segment = 3.14159265358979;
  /// Spread of the class centers.
  double center_sd = 1.0;
  /// Radius of each class manifold.
  double radius = 1.0;
  double noise_sd = 0.01;
  /// Std of the latent displacement between the two views of an instance.
  double pair_sd = 0.1;
};

struct SynthClassDataset {
  Eigen::MatrixXd points;
  std::vector<int> labels;
  Eigen::MatrixXd latents;
  int num_classes = 0;

  [[nodiscard]] Index size() const noexcept { return points.rows(); }
};

/// K random smooth embeddings of a torus segment: class k maps a latent
/// theta to center_k + A_k [cos(W_k theta + p_k); sin(W_k theta + p_k)].
/// Moving theta rotates each (cos, sin) pair, so within-class motion is a
/// linear group action on the embedded coordinates.
class SynthClassManifolds {
 public:
  SynthClassManifolds(int num_classes, Index ambient_dim, Index intrinsic_dim, std::uint64_t seed,
                      SynthClassConfig cfg = {});

  [[nodiscard]] int num_classes() const noexcept { return static_cast<int>(centers_.size()); }
  [[nodiscard]] Index ambient_dim() const noexcept { return ambient_dim_; }
  [[nodiscard]] Index intrinsic_dim() const noexcept { return intrinsic_dim_; }
  [[nodiscard]] const SynthClassConfig& config() const noexcept { return cfg_; }

  /// Noise-free embedding of one latent point.
  [[nodiscard]] Eigen::VectorXd embed(int label, const Eigen::VectorXd& latent) const;

  [[nodiscard]] SynthClassDataset sample(Index per_class, std::uint64_t seed) const;

  /// Two views of `batch_size` random instances: latents theta and
  /// theta + delta with delta ~ N(0, pair_sd^2), same class.
  struct Pairs {
    Eigen::MatrixXd first;
    Eigen::MatrixXd second;
    std::vector<int> labels;
  };
  [[nodiscard]] Pairs sample_pairs(Index batch_size, std::uint64_t seed) const;

 private:
  Index ambient_dim_;
  Index intrinsic_dim_;
  SynthClassConfig cfg_;
  std::vector<Eigen::VectorXd> centers_;
  std::vector<Eigen::MatrixXd> maps_;
  std::vector<Eigen::MatrixXd> freqs_;
  std::vector<Eigen::VectorXd> phases_;
};

[[nodiscard]] SynthClassDataset synth_class_manifolds(int num_classes, Index per_class, Index ambient_dim,
                                                      Index intrinsic_dim, std::uint64_t seed,
                                                      const SynthClassConfig& cfg = {});

}  // namespace vlgo
