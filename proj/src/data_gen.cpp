#include "vlgo/data_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace vlgo {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Indices of the `count` nearest other points of `anchor`, ordered by
// (distance, index).
std::vector<Index> nearest(const Eigen::MatrixXd& points, Index anchor, Index count) {
  const Index n = points.rows();
  std::vector<std::pair<double, Index>> d;
  d.reserve(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    if (i == anchor) continue;
    d.emplace_back((points.row(i) - points.row(anchor)).squaredNorm(), i);
  }
  const auto k = static_cast<std::ptrdiff_t>(std::min<Index>(count, n - 1));
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  for (std::ptrdiff_t i = 0; i < k; ++i) out.push_back(d[static_cast<std::size_t>(i)].second);
  return out;
}

void check_ranks(Index n, Index k_lo, Index k_hi) {
  if (k_lo < 1 || k_lo > k_hi) {
    throw std::invalid_argument("neighbor_pairs: need 1 <= k_lo <= k_hi, got [" + std::to_string(k_lo) + ", " +
                                std::to_string(k_hi) + "]");
  }
  if (k_hi >= n) {
    throw std::invalid_argument("neighbor_pairs: k_hi " + std::to_string(k_hi) + " must be below the point count " +
                                std::to_string(n));
  }
}

}  // namespace

SwissRoll swiss_roll(Index n, double noise_sd, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("swiss_roll: n must be >= 1");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("swiss_roll: noise_sd must be >= 0");
  Rng rng = make_rng(seed, {0x5155});
  SwissRoll roll{Eigen::MatrixXd(n, 3), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const double t = 1.5 * kPi + 3.0 * kPi * uniform01(rng);
    const double h = 21.0 * uniform01(rng);
    roll.t[i] = t;
    roll.h[i] = h;
    roll.points(i, 0) = t * std::cos(t);
    roll.points(i, 1) = h;
    roll.points(i, 2) = t * std::sin(t);
  }
  if (noise_sd > 0.0) {
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < 3; ++k) roll.points(i, k) += noise_sd * standard_normal(rng);
    }
  }
  return roll;
}

NeighborTable::NeighborTable(const Eigen::MatrixXd& points, Index max_rank) : max_rank_(max_rank) {
  if (max_rank < 1 || max_rank >= points.rows()) {
    throw std::invalid_argument("NeighborTable: max_rank must lie in [1, n)");
  }
  table_.reserve(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) table_.push_back(nearest(points, i, max_rank));
}

PointPairBatch NeighborTable::sample(const Eigen::MatrixXd& points, Index k_lo, Index k_hi, Index batch_size,
                                     std::uint64_t seed) const {
  check_ranks(points.rows(), k_lo, k_hi);
  if (k_hi > max_rank_) throw std::invalid_argument("NeighborTable::sample: k_hi exceeds the table's max rank");
  if (points.rows() != num_points()) throw std::invalid_argument("NeighborTable::sample: point count mismatch");
  if (batch_size < 1) throw std::invalid_argument("NeighborTable::sample: batch_size must be >= 1");
  Rng rng = make_rng(seed, {0x9a17});
  PointPairBatch batch;
  batch.sources.resize(batch_size, points.cols());
  batch.targets.resize(batch_size, points.cols());
  const auto n = static_cast<std::uint64_t>(points.rows());
  const auto span = static_cast<std::uint64_t>(k_hi - k_lo + 1);
  for (Index b = 0; b < batch_size; ++b) {
    const auto anchor = static_cast<Index>(uniform_index(rng, n));
    const Index rank = k_lo + static_cast<Index>(uniform_index(rng, span));
    const Index partner = neighbor(anchor, rank);
    batch.sources.row(b) = points.row(anchor);
    batch.targets.row(b) = points.row(partner);
    batch.anchors.push_back(anchor);
    batch.partners.push_back(partner);
    batch.ranks.push_back(rank);
  }
  return batch;
}

PointPairBatch neighbor_pairs(const Eigen::MatrixXd& points, Index k_lo, Index k_hi, Index batch_size,
                              std::uint64_t seed) {
  check_ranks(points.rows(), k_lo, k_hi);
  return NeighborTable(points, k_hi).sample(points, k_lo, k_hi, batch_size, seed);
}

SynthClassManifolds::SynthClassManifolds(int num_classes, Index ambient_dim, Index intrinsic_dim, std::uint64_t seed,
                                         SynthClassConfig cfg)
    : ambient_dim_(ambient_dim), intrinsic_dim_(intrinsic_dim), cfg_(cfg) {
  if (num_classes < 1) throw std::invalid_argument("synth_class_manifolds: need at least one class");
  if (ambient_dim < 1) throw std::invalid_argument("synth_class_manifolds: ambient_dim must be >= 1");
  if (intrinsic_dim < 0 || intrinsic_dim > ambient_dim) {
    throw std::invalid_argument("synth_class_manifolds: intrinsic_dim must lie in [0, ambient_dim]");
  }
  if (cfg_.frequencies < 1) throw std::invalid_argument("synth_class_manifolds: frequencies must be >= 1");
  Rng rng = make_rng(seed, {0xc1a5});
  const Index f = cfg_.frequencies;
  const double map_sd = cfg_.radius / std::sqrt(static_cast<double>(f * ambient_dim));
  for (int k = 0; k < num_classes; ++k) {
    Eigen::VectorXd center(ambient_dim);
    for (Index i = 0; i < ambient_dim; ++i) center[i] = cfg_.center_sd * standard_normal(rng);
    Eigen::MatrixXd map(ambient_dim, 2 * f);
    for (Index c = 0; c < 2 * f; ++c) {
      for (Index r = 0; r < ambient_dim; ++r) map(r, c) = map_sd * standard_normal(rng);
    }
    Eigen::MatrixXd freq(f, intrinsic_dim);
    for (Index c = 0; c < intrinsic_dim; ++c) {
      for (Index r = 0; r < f; ++r) freq(r, c) = 0.5 + uniform01(rng);
    }
    Eigen::VectorXd phase(f);
    for (Index r = 0; r < f; ++r) phase[r] = 2.0 * kPi * uniform01(rng);
    centers_.push_back(std::move(center));
    maps_.push_back(std::move(map));
    freqs_.push_back(std::move(freq));
    phases_.push_back(std::move(phase));
  }
}

Eigen::VectorXd SynthClassManifolds::embed(int label, const Eigen::VectorXd& latent) const {
  if (label < 0 || label >= num_classes()) throw std::invalid_argument("SynthClassManifolds::embed: bad label");
  if (latent.size() != intrinsic_dim_) throw std::invalid_argument("SynthClassManifolds::embed: latent dim mismatch");
  const auto k = static_cast<std::size_t>(label);
  const Index f = cfg_.frequencies;
  Eigen::VectorXd angle = phases_[k];
  if (intrinsic_dim_ > 0) angle += freqs_[k] * latent;
  Eigen::VectorXd feat(2 * f);
  feat.head(f) = angle.array().cos().matrix();
  feat.tail(f) = angle.array().sin().matrix();
  return centers_[k] + maps_[k] * feat;
}

SynthClassDataset SynthClassManifolds::sample(Index per_class, std::uint64_t seed) const {
  if (per_class < 1) throw std::invalid_argument("SynthClassManifolds::sample: per_class must be >= 1");
  Rng rng = make_rng(seed, {0xda7a});
  const Index n = per_class * num_classes();
  SynthClassDataset ds{Eigen::MatrixXd(n, ambient_dim_), {}, Eigen::MatrixXd(n, intrinsic_dim_), num_classes()};
  ds.labels.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (int k = 0; k < num_classes(); ++k) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      Eigen::VectorXd latent(intrinsic_dim_);
      for (Index q = 0; q < intrinsic_dim_; ++q) latent[q] = cfg_.segment * uniform01(rng);
      Eigen::VectorXd x = embed(k, latent);
      for (Index a = 0; a < ambient_dim_; ++a) x[a] += cfg_.noise_sd * standard_normal(rng);
      ds.points.row(row) = x.transpose();
      ds.latents.row(row) = latent.transpose();
      ds.labels.push_back(k);
    }
  }
  return ds;
}

SynthClassManifolds::Pairs SynthClassManifolds::sample_pairs(Index batch_size, std::uint64_t seed) const {
  if (batch_size < 1) throw std::invalid_argument("SynthClassManifolds::sample_pairs: batch_size must be >= 1");
  Rng rng = make_rng(seed, {0x9a125});
  Pairs p{Eigen::MatrixXd(batch_size, ambient_dim_), Eigen::MatrixXd(batch_size, ambient_dim_), {}};
  for (Index b = 0; b < batch_size; ++b) {
    const int k = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_classes())));
    Eigen::VectorXd latent(intrinsic_dim_);
    for (Index q = 0; q < intrinsic_dim_; ++q) latent[q] = cfg_.segment * uniform01(rng);
    Eigen::VectorXd moved = latent;
    for (Index q = 0; q < intrinsic_dim_; ++q) moved[q] += cfg_.pair_sd * standard_normal(rng);
    Eigen::VectorXd x1 = embed(k, latent);
    Eigen::VectorXd x2 = embed(k, moved);
    for (Index a = 0; a < ambient_dim_; ++a) {
      x1[a] += cfg_.noise_sd * standard_normal(rng);
      x2[a] += cfg_.noise_sd * standard_normal(rng);
    }
    p.first.row(b) = x1.transpose();
    p.second.row(b) = x2.transpose();
    p.labels.push_back(k);
  }
  return p;
}

SynthClassDataset synth_class_manifolds(int num_classes, Index per_class, Index ambient_dim, Index intrinsic_dim,
                                        std::uint64_t seed, const SynthClassConfig& cfg) {
  return SynthClassManifolds(num_classes, ambient_dim, intrinsic_dim, seed, cfg).sample(per_class, seed);
}

}  // namespace vlgo
