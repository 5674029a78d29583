#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "kslab/tree.hpp"

namespace kslab::testing {

inline TreeProcess random_process(const BinomialTree& tree, std::size_t width,
                                  std::uint64_t seed, double scale = 1.0) {
  TreeProcess p(tree, width);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (auto& v : p.data()) v = scale * nd(rng);
  return p;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed,
                                         double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = scale * nd(rng);
  return v;
}

/// Same vector at every node of every level.
inline TreeProcess deterministic_process(const BinomialTree& tree,
                                         const std::vector<std::vector<double>>& by_level) {
  TreeProcess p(tree, by_level.at(0).size());
  for (std::size_t l = 0; l <= tree.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto node = p.node(l, i);
      std::copy(by_level[l].begin(), by_level[l].end(), node.begin());
    }
  return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace kslab::testing
