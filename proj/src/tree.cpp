#include "kslab/tree.hpp"

#include <bit>
#include <cmath>
#include <random>

#include "kslab/errors.hpp"
#include "kslab/random.hpp"

namespace kslab {

BinomialTree::BinomialTree(std::size_t depth, double horizon)
    : depth_(depth), horizon_(horizon) {
  if (depth < 1 || depth > kMaxDepth) {
    throw InvalidArgument("tree depth must be in [1, 20], got " +
                          std::to_string(depth));
  }
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw InvalidArgument("tree horizon must be positive");
  }
  dt_ = horizon / static_cast<double>(depth);
  sqrt_dt_ = std::sqrt(dt_);
}

double BinomialTree::brownian(std::size_t level, std::size_t i) const {
  // Bits of i record the branch taken at each step, 1 = down.
  const auto downs = static_cast<double>(std::popcount(i));
  return sqrt_dt_ * (static_cast<double>(level) - 2.0 * downs);
}

BinomialTree build_tree(std::size_t depth, double horizon) {
  return BinomialTree(depth, horizon);
}

TreeProcess::TreeProcess(const BinomialTree& tree, std::size_t width)
    : depth_(tree.depth()), width_(width), data_(tree.node_count() * width, 0.0) {}

std::span<double> TreeProcess::node(std::size_t level, std::size_t i) {
  return {data_.data() + (BinomialTree::level_offset(level) + i) * width_, width_};
}

std::span<const double> TreeProcess::node(std::size_t level, std::size_t i) const {
  return {data_.data() + (BinomialTree::level_offset(level) + i) * width_, width_};
}

std::span<double> TreeProcess::level(std::size_t level) {
  return {data_.data() + BinomialTree::level_offset(level) * width_,
          BinomialTree::level_size(level) * width_};
}

std::span<const double> TreeProcess::level(std::size_t level) const {
  return {data_.data() + BinomialTree::level_offset(level) * width_,
          BinomialTree::level_size(level) * width_};
}

void TreeProcess::axpy(double s, const TreeProcess& other) {
  if (!same_shape(other)) throw InvalidArgument("tree process axpy: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * other.data_[k];
}

void TreeProcess::scale(double s) {
  for (double& v : data_) v *= s;
}

void TreeProcess::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void TreeProcess::mask(std::span<const double> weights) {
  if (weights.size() != width_) throw InvalidArgument("tree process mask: width mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] *= weights[k % width_];
}

double pairwise_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  if (n == 1) return values[0];
  if (n == 2) return values[0] + values[1];
  const std::size_t half = n / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

void check_level(const TreeProcess& proc, std::size_t level) {
  if (level < 1 || level > proc.depth()) {
    throw InvalidArgument("level " + std::to_string(level) +
                          " out of range [1, " + std::to_string(proc.depth()) + "]");
  }
}

}  // namespace

std::vector<double> conditional_expectation(const TreeProcess& proc,
                                            std::size_t level) {
  check_level(proc, level);
  const std::size_t parents = BinomialTree::level_size(level - 1);
  const std::size_t w = proc.width();
  std::vector<double> out(parents * w);
  for (std::size_t i = 0; i < parents; ++i) {
    auto up = proc.node(level, BinomialTree::up_child(i));
    auto dn = proc.node(level, BinomialTree::down_child(i));
    for (std::size_t c = 0; c < w; ++c) out[i * w + c] = 0.5 * (up[c] + dn[c]);
  }
  return out;
}

std::vector<double> martingale_coefficient(const TreeProcess& proc,
                                           const BinomialTree& tree,
                                           std::size_t level) {
  check_level(proc, level);
  const std::size_t parents = BinomialTree::level_size(level - 1);
  const std::size_t w = proc.width();
  const double inv = 1.0 / (2.0 * tree.sqrt_dt());
  std::vector<double> out(parents * w);
  for (std::size_t i = 0; i < parents; ++i) {
    auto up = proc.node(level, BinomialTree::up_child(i));
    auto dn = proc.node(level, BinomialTree::down_child(i));
    for (std::size_t c = 0; c < w; ++c) out[i * w + c] = (up[c] - dn[c]) * inv;
  }
  return out;
}

std::vector<double> expectation(const TreeProcess& proc, std::size_t level) {
  if (level > proc.depth()) {
    throw InvalidArgument("level " + std::to_string(level) + " beyond tree depth");
  }
  const std::size_t w = proc.width();
  auto vals = proc.level(level);
  std::vector<double> buf(vals.begin(), vals.end());
  std::size_t count = BinomialTree::level_size(level);
  while (count > 1) {
    const std::size_t half = count / 2;
    for (std::size_t k = 0; k < half; ++k) {
      for (std::size_t c = 0; c < w; ++c) {
        buf[k * w + c] = buf[2 * k * w + c] + buf[(2 * k + 1) * w + c];
      }
    }
    count = half;
  }
  buf.resize(w);
  const double inv = std::ldexp(1.0, -static_cast<int>(level));
  for (double& v : buf) v *= inv;
  return buf;
}

double level_mean(std::span<const double> node_values) {
  return pairwise_sum(node_values) / static_cast<double>(node_values.size());
}

std::vector<int> sample_path(const BinomialTree& tree, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::vector<int> path(tree.depth());
  for (auto& step : path) step = (rng() >> 63) ? 1 : -1;
  return path;
}

double level_inner(double h, const TreeProcess& u, const TreeProcess& v,
                   std::size_t level) {
  if (!u.same_shape(v)) throw InvalidArgument("level inner: shape mismatch");
  const std::size_t w = u.width();
  const std::size_t count = BinomialTree::level_size(level);
  std::vector<double> per_node(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto a = u.node(level, i);
    auto b = v.node(level, i);
    double s = 0.0;
    for (std::size_t c = 0; c < w; ++c) s += a[c] * b[c];
    per_node[i] = s * h;
  }
  return level_mean(per_node);
}

double space_time_inner(const BinomialTree& tree, double h, const TreeProcess& u,
                        const TreeProcess& v, std::span<const double> weights) {
  if (!u.same_shape(v)) throw InvalidArgument("space-time inner: shape mismatch");
  if (!weights.empty() && weights.size() != u.width()) {
    throw InvalidArgument("space-time inner: weight width mismatch");
  }
  const std::size_t w = u.width();
  double total = 0.0;
  std::vector<double> per_node;
  for (std::size_t l = 0; l < tree.depth(); ++l) {
    const std::size_t count = BinomialTree::level_size(l);
    per_node.assign(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      auto a = u.node(l, i);
      auto b = v.node(l, i);
      double s = 0.0;
      if (weights.empty()) {
        for (std::size_t c = 0; c < w; ++c) s += a[c] * b[c];
      } else {
        for (std::size_t c = 0; c < w; ++c) s += weights[c] * a[c] * b[c];
      }
      per_node[i] = s * h;
    }
    total += level_mean(per_node) * tree.dt();
  }
  return total;
}

double space_time_norm_sq(const BinomialTree& tree, double h,
                          const TreeProcess& u, std::span<const double> weights) {
  return space_time_inner(tree, h, u, u, weights);
}

}  // namespace kslab
