#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kslab/errors.hpp"
#include "kslab/random.hpp"
#include "kslab/tree.hpp"

using namespace kslab;

namespace {

TreeProcess random_process(const BinomialTree& tree, std::size_t width, unsigned seed) {
  TreeProcess p(tree, width);
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  for (auto& v : p.data()) v = nd(rng);
  return p;
}

// Mean over all 2^level paths by explicit enumeration with weight 2^-level.
double brute_mean(const TreeProcess& p, std::size_t level, std::size_t c) {
  double s = 0.0;
  const std::size_t count = BinomialTree::level_size(level);
  for (std::size_t i = 0; i < count; ++i) s += p.node(level, i)[c] / count;
  return s;
}

}  // namespace

TEST(Tree, Shape) {
  BinomialTree t = build_tree(3, 1.0);
  EXPECT_DOUBLE_EQ(t.dt(), 1.0 / 3.0);
  EXPECT_EQ(t.node_count(), 15u);
  EXPECT_THROW(build_tree(21, 1.0), InvalidArgument);
  EXPECT_THROW(build_tree(0, 1.0), InvalidArgument);
  EXPECT_THROW(build_tree(3, 0.0), InvalidArgument);
  BinomialTree one = build_tree(1, 2.0);
  EXPECT_DOUBLE_EQ(one.brownian(1, 0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(one.brownian(1, 1), -std::sqrt(2.0));
}

TEST(Tree, BrownianMoments) {
  BinomialTree t = build_tree(10, 1.5);
  TreeProcess w(t, 1), w2(t, 1);
  for (std::size_t l = 0; l <= t.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      w.node(l, i)[0] = t.brownian(l, i);
      w2.node(l, i)[0] = std::pow(t.brownian(l, i), 2);
    }
  EXPECT_NEAR(expectation(w, 10)[0], 0.0, 1e-14);
  EXPECT_NEAR(expectation(w2, 10)[0], 1.5, 1e-12);
  // W is a martingale: parents equal the children average.
  for (std::size_t l = 1; l <= t.depth(); ++l) {
    auto ce = conditional_expectation(w, l);
    auto z = martingale_coefficient(w, t, l);
    for (std::size_t i = 0; i < ce.size(); ++i) {
      EXPECT_NEAR(ce[i], w.node(l - 1, i)[0], 1e-13);
      EXPECT_NEAR(z[i], 1.0, 1e-13);
    }
  }
}

TEST(Tree, ConditionalExpectationAndCoefficient) {
  BinomialTree t = build_tree(2, 1.0);
  TreeProcess p(t, 1);
  p.node(1, 0)[0] = 1.0;
  p.node(1, 1)[0] = -1.0;
  EXPECT_EQ(conditional_expectation(p, 1)[0], 0.0);
  p.node(1, 0)[0] = t.sqrt_dt();
  p.node(1, 1)[0] = -t.sqrt_dt();
  EXPECT_NEAR(martingale_coefficient(p, t, 1)[0], 1.0, 1e-15);
  p.node(1, 0)[0] = 3.0;
  p.node(1, 1)[0] = 3.0;
  EXPECT_EQ(conditional_expectation(p, 1)[0], 3.0);
  EXPECT_EQ(martingale_coefficient(p, t, 1)[0], 0.0);
  EXPECT_THROW(conditional_expectation(p, 0), InvalidArgument);
  EXPECT_THROW(conditional_expectation(p, 3), InvalidArgument);
}

TEST(Tree, ReconstructionAndTower) {
  BinomialTree t = build_tree(7, 2.0);
  TreeProcess p = random_process(t, 3, 11);
  for (std::size_t l = 1; l <= t.depth(); ++l) {
    auto m = conditional_expectation(p, l);
    auto z = martingale_coefficient(p, t, l);
    for (std::size_t i = 0; i < BinomialTree::level_size(l - 1); ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(m[i * 3 + c] + z[i * 3 + c] * t.sqrt_dt(),
                    p.node(l, BinomialTree::up_child(i))[c], 1e-14 * 8);
        EXPECT_NEAR(m[i * 3 + c] - z[i * 3 + c] * t.sqrt_dt(),
                    p.node(l, BinomialTree::down_child(i))[c], 1e-14 * 8);
      }
    // tower: E at l-1 of the parent means equals E at l
    TreeProcess q = p;
    std::copy(m.begin(), m.end(), q.level(l - 1).begin());
    auto lhs = expectation(q, l - 1);
    auto rhs = expectation(p, l);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(lhs[c], rhs[c], 1e-14);
      EXPECT_NEAR(rhs[c], brute_mean(p, l, c), 1e-14);
    }
  }
}

TEST(Tree, ItoIsometry) {
  // M_N = sum_k Z_k dW_k for an adapted Z; E M_N^2 = sum_k E Z_k^2 dt.
  BinomialTree t = build_tree(8, 1.0);
  TreeProcess z = random_process(t, 1, 3);
  TreeProcess m(t, 1), z2(t, 1);
  for (std::size_t l = 0; l < t.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      const double zi = z.node(l, i)[0];
      z2.node(l, i)[0] = zi * zi;
      m.node(l + 1, BinomialTree::up_child(i))[0] = m.node(l, i)[0] + zi * t.sqrt_dt();
      m.node(l + 1, BinomialTree::down_child(i))[0] = m.node(l, i)[0] - zi * t.sqrt_dt();
    }
  TreeProcess m2(t, 1);
  for (std::size_t i = 0; i < BinomialTree::level_size(8); ++i)
    m2.node(8, i)[0] = std::pow(m.node(8, i)[0], 2);
  double rhs = 0.0;
  for (std::size_t l = 0; l < t.depth(); ++l) rhs += expectation(z2, l)[0] * t.dt();
  EXPECT_NEAR(expectation(m2, 8)[0], rhs, 1e-12);
  EXPECT_NEAR(space_time_norm_sq(t, 1.0, z), rhs, 1e-12);
}

TEST(Tree, ConstantExpectation) {
  BinomialTree t = build_tree(5, 1.0);
  TreeProcess p(t, 2);
  p.fill(2.5);
  for (std::size_t l = 0; l <= 5; ++l) {
    auto e = expectation(p, l);
    EXPECT_DOUBLE_EQ(e[0], 2.5);
    EXPECT_DOUBLE_EQ(e[1], 2.5);
  }
}

TEST(Tree, SamplePaths) {
  BinomialTree t = build_tree(10, 1.0);
  EXPECT_EQ(sample_path(t, 42), sample_path(t, 42));
  EXPECT_EQ(sample_path(build_tree(1, 1.0), 7).size(), 1u);
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    double w = 0.0;
    for (int step : sample_path(t, s)) w += step * t.sqrt_dt();
    mean += w / 1000.0;
  }
  EXPECT_LE(std::abs(mean), 4.0 * std::sqrt(1.0 / 1000.0));
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, "initial"), derive_seed(1, "targets"));
  EXPECT_NE(derive_seed(1, "initial"), derive_seed(2, "initial"));
  EXPECT_EQ(derive_seed(5, "x"), derive_seed(5, "x"));
  Rng a(3), b(3);
  EXPECT_EQ(a.normal(), b.normal());
}
