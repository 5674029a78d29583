#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kslab {

/// Binomial surrogate of a one-dimensional Brownian filtration on [0,T].
/// Level l has 2^l nodes; node i at level l has the up child 2i
/// (increment +sqrt(dt)) and the down child 2i+1 (increment -sqrt(dt)).
class BinomialTree {
 public:
  static constexpr std::size_t kMaxDepth = 20;

  BinomialTree(std::size_t depth, double horizon);

  std::size_t depth() const { return depth_; }
  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }

  std::size_t node_count() const { return (std::size_t{2} << depth_) - 1; }
  static std::size_t level_size(std::size_t level) { return std::size_t{1} << level; }
  static std::size_t level_offset(std::size_t level) { return level_size(level) - 1; }
  static std::size_t up_child(std::size_t i) { return 2 * i; }
  static std::size_t down_child(std::size_t i) { return 2 * i + 1; }

  double time(std::size_t level) const { return static_cast<double>(level) * dt_; }
  /// W at node i of the given level.
  double brownian(std::size_t level, std::size_t i) const;

 private:
  std::size_t depth_;
  double horizon_;
  double dt_;
  double sqrt_dt_;
};

/// Guards 1 <= depth <= 20 and horizon > 0.
BinomialTree build_tree(std::size_t depth, double horizon);

/// One value vector of fixed width per tree node, stored level-major.
class TreeProcess {
 public:
  TreeProcess() = default;
  TreeProcess(const BinomialTree& tree, std::size_t width);

  std::size_t depth() const { return depth_; }
  std::size_t width() const { return width_; }

  std::span<double> node(std::size_t level, std::size_t i);
  std::span<const double> node(std::size_t level, std::size_t i) const;
  std::span<double> level(std::size_t level);
  std::span<const double> level(std::size_t level) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const TreeProcess& other) const {
    return depth_ == other.depth_ && width_ == other.width_;
  }

  /// this += s * other
  void axpy(double s, const TreeProcess& other);
  void scale(double s);
  void fill(double v);
  /// Multiplies every node vector componentwise by `weights` (a mask).
  void mask(std::span<const double> weights);

 private:
  std::size_t depth_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Deterministic pairwise (tree-shaped) sum.
double pairwise_sum(std::span<const double> values);

/// Parent values at level-1: average of the two children at `level`.
std::vector<double> conditional_expectation(const TreeProcess& proc,
                                            std::size_t level);

/// Parent values at level-1: (up - down) / (2 sqrt(dt)).
std::vector<double> martingale_coefficient(const TreeProcess& proc,
                                           const BinomialTree& tree,
                                           std::size_t level);

/// Mean node vector at `level` (uniform path weights 2^-level).
std::vector<double> expectation(const TreeProcess& proc, std::size_t level);

/// Mean of one scalar per node at `level`, pairwise order.
double level_mean(std::span<const double> node_values);

/// Reproducible +-1 branch choices (+1 = up), one per time step.
std::vector<int> sample_path(const BinomialTree& tree, std::uint64_t seed);

/// E sum_{l=0}^{N-1} dt <u, v>_h where <u,v>_h = h sum_j u_j v_j.
/// `weights`, when non-empty, multiplies the integrand pointwise.
double space_time_inner(const BinomialTree& tree, double h, const TreeProcess& u,
                        const TreeProcess& v,
                        std::span<const double> weights = {});

double space_time_norm_sq(const BinomialTree& tree, double h,
                          const TreeProcess& u,
                          std::span<const double> weights = {});

/// E <u(level), v(level)>_h at a single level.
double level_inner(double h, const TreeProcess& u, const TreeProcess& v,
                   std::size_t level);

}  // namespace kslab
