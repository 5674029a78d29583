#include <gtest/gtest.h>

#include <cmath>

#include "kslab/errors.hpp"
#include "game_fixtures.hpp"

using namespace kslab;
using namespace kslab::testing;

namespace {

// E sum_{l<N} dt h sum_j w_j u_j^2 by explicit loops over nodes.
double hand_norm(const TreeProcess& u, const BinomialTree& t, const Grid& g,
                 const std::vector<double>* w = nullptr) {
  double s = 0.0;
  for (std::size_t l = 0; l < t.depth(); ++l) {
    const double weight = t.dt() / static_cast<double>(BinomialTree::level_size(l));
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto node = u.node(l, i);
      for (std::size_t j = 0; j < g.size(); ++j)
        s += weight * g.h * (w ? (*w)[j] : 1.0) * node[j] * node[j];
    }
  }
  return s;
}

}  // namespace

TEST(Costs, ZeroArguments) {
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(10);
  RegionMask m = standard_masks(g);
  ForwardSolution y{TreeProcess(t, g.size())};
  TreeProcess zero(t, g.size());
  auto rep = evaluate_robust_cost(y, zero, zero, zero, Targets{}, m, GameParams{}, t, g);
  EXPECT_EQ(rep.total, 0.0);
  EXPECT_EQ(evaluate_leader_cost(zero, zero, m, t, g).total, 0.0);
  EXPECT_EQ(evaluate_follower_cost(y, zero, Targets{}, m, 1.0, t, g).total, 0.0);
}

TEST(Costs, PerfectTracking) {
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(12);
  RegionMask m = standard_masks(g);
  ForwardSolution y{random_process(t, g.size(), 3)};
  Targets tg;
  tg.y_d0 = y.y;
  tg.y_d1 = TreeProcess(t, g.size());
  tg.y_d2 = TreeProcess(t, g.size());
  auto d1 = build_derivative_operator(g, 1);
  auto d2 = build_derivative_operator(g, 2);
  for (std::size_t l = 0; l <= t.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      d1.apply(y.y.node(l, i), tg.y_d1.node(l, i));
      d2.apply(y.y.node(l, i), tg.y_d2.node(l, i));
    }
  TreeProcess zero(t, g.size());
  auto rep = evaluate_robust_cost(y, zero, zero, zero, tg, m, GameParams{}, t, g);
  EXPECT_NEAR(rep.total, 0.0, 1e-20);
}

TEST(Costs, DisturbanceOnlyAgainstHandQuadrature) {
  BinomialTree t = build_tree(4, 0.8);
  Grid g = build_grid(12);
  RegionMask m = standard_masks(g);
  ForwardSolution y{TreeProcess(t, g.size())};
  TreeProcess zero(t, g.size());
  TreeProcess psi1 = random_process(t, g.size(), 8);
  GameParams game{2.0, 3.0, 5.0};
  auto rep = evaluate_robust_cost(y, zero, psi1, zero, Targets{}, m, game, t, g);
  EXPECT_NEAR(rep.total, -1.5 * hand_norm(psi1, t, g), 1e-12 * hand_norm(psi1, t, g));
}

TEST(Costs, LeaderCost) {
  BinomialTree t = build_tree(4, 2.0);
  Grid g = build_grid(19);
  RegionMask m = standard_masks(g);
  TreeProcess f(t, g.size());
  f.fill(1.0);
  TreeProcess zero(t, g.size());
  auto rep = evaluate_leader_cost(f, zero, m, t, g);
  EXPECT_NEAR(rep.total, 0.5 * 2.0 * m.measure(Region::O, g), 1e-13);
  TreeProcess f2 = random_process(t, g.size(), 1), g2 = random_process(t, g.size(), 2);
  const double j = evaluate_leader_cost(f2, g2, m, t, g).total;
  f2.scale(2.0);
  g2.scale(2.0);
  EXPECT_NEAR(evaluate_leader_cost(f2, g2, m, t, g).total, 4.0 * j, 1e-12 * j);
}

TEST(Costs, BreakdownAndFollowerIdentity) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(12);
  GameProblem p = random_game(t, g, 21);
  GameParams game{2.0, 3.0, 5.0};
  TreeProcess v = random_process(t, g.size(), 30), psi1 = random_process(t, g.size(), 31),
              psi2 = random_process(t, g.size(), 32);
  ForwardSolution y = forward_solve(game_forward_inputs(p, psi1, psi2, v), t, g);
  auto jr = evaluate_robust_cost(y, v, psi1, psi2, p.targets, p.masks, game, t, g);
  double sum = 0.0;
  for (const auto& [k, val] : jr.terms) sum += val;
  EXPECT_NEAR(sum, jr.total, 1e-12 * std::abs(jr.total));
  auto jf = evaluate_follower_cost(y, v, p.targets, p.masks, game.beta, t, g);
  EXPECT_NEAR(jf.total,
              jr.total + 1.5 * hand_norm(psi1, t, g) + 2.5 * hand_norm(psi2, t, g),
              1e-11 * std::abs(jf.total));
  EXPECT_NEAR(jr.term("follower"), 1.0 * hand_norm(v, t, g, &p.masks[Region::D]), 1e-12);
  TreeProcess zero(t, g.size());
  ForwardSolution y0 = forward_solve(game_forward_inputs(p, zero, zero, v), t, g);
  EXPECT_DOUBLE_EQ(evaluate_follower_cost(y0, v, p.targets, p.masks, game.beta, t, g).total,
                   evaluate_robust_cost(y0, v, zero, zero, p.targets, p.masks, game, t, g).total);
}

TEST(Saddle, ZeroDataConvergesImmediately) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p;
  p.params = varied_model();
  p.masks = standard_masks(g);
  p.y0.assign(g.size(), 0.0);
  auto s = solve_saddle_point(p, t, g);
  EXPECT_EQ(s.picard_iterations, 1u);
  for (double v : s.y.y.data()) EXPECT_EQ(v, 0.0);
  for (double v : s.adjoint.z.data()) EXPECT_EQ(v, 0.0);
  for (double v : s.v_star.data()) EXPECT_EQ(v, 0.0);
}

TEST(Saddle, CharacterizationIdentities) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 5);
  p.game = {700.0, 1100.0, 1300.0};
  auto s = solve_saddle_point(p, t, g);
  const auto& chi = p.masks[Region::D];
  for (std::size_t l = 0; l <= t.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        EXPECT_EQ(s.psi1_star.node(l, i)[j], s.adjoint.z.node(l, i)[j] * (1.0 / 1100.0));
        EXPECT_EQ(s.psi2_star.node(l, i)[j], s.adjoint.Z.node(l, i)[j] * (1.0 / 1300.0));
        EXPECT_EQ(s.v_star.node(l, i)[j], s.adjoint.z.node(l, i)[j] * chi[j] * (-1.0 / 700.0));
      }
}

TEST(Saddle, PicardMatchesDirectAssembly) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GameProblem p = random_game(t, g, 100 * seed);
    auto picard = solve_saddle_point(p, t, g);
    double assembly_residual = 1.0;
    auto direct = direct_assembly_solve(p, t, g, &assembly_residual);
    EXPECT_LE(assembly_residual, 1e-11);
    EXPECT_LE(relative_difference(picard.y.y, direct.y.y, t, g.h), 1e-8);
    EXPECT_LE(relative_difference(picard.adjoint.z, direct.adjoint.z, t, g.h), 1e-8);
    EXPECT_LE(relative_difference(picard.adjoint.Z, direct.adjoint.Z, t, g.h), 1e-8);
    EXPECT_LE(relative_difference(picard.v_star, direct.v_star, t, g.h), 1e-8);
  }
}

TEST(Saddle, DirectZeroData) {
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(8);
  GameProblem p;
  p.params = varied_model();
  p.masks = standard_masks(g);
  p.y0.assign(g.size(), 0.0);
  auto d = direct_assembly_solve(p, t, g);
  for (double v : d.y.y.data()) EXPECT_EQ(v, 0.0);
  for (double v : d.adjoint.z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Saddle, DecouplingLimit) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(10);
  GameProblem p = random_game(t, g, 9, 1e300);
  auto s = solve_saddle_point(p, t, g);
  TreeProcess zero(t, g.size());
  auto free = forward_solve(game_forward_inputs(p, zero, zero, zero), t, g);
  EXPECT_LE(relative_difference(s.y.y, free.y, t, g.h), 1e-14);
  BackwardInputs bi;
  bi.params = p.params;
  bi.terminal = TreeProcess(t, g.size());
  bi.source = tracking_source(free.y, p.targets, build_tracking_operators(g, p.masks), t);
  auto adj = backward_solve(bi, t, g);
  EXPECT_LE(relative_difference(s.adjoint.z, adj.z, t, g.h), 1e-12);
  EXPECT_LE(relative_difference(s.adjoint.Z, adj.Z, t, g.h), 1e-12);
}

TEST(Saddle, FirstOrderConditionsAndMargins) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 77);
  auto s = solve_saddle_point(p, t, g);
  auto foc = verify_first_order_conditions(p, s, t, g, 3, 1);
  EXPECT_LE(foc.max_residual, 1e-6);
  auto margins = verify_saddle_inequalities(p, s, t, g, 100, 2);
  EXPECT_TRUE(margins.parameters_validated);
  EXPECT_EQ(margins.violations, 0u);
  EXPECT_GE(margins.worst_concave_margin, 0.0);
  EXPECT_GE(margins.worst_convex_margin, 0.0);
  auto zero = verify_saddle_inequalities(p, s, t, g, 3, 2, 0.0);
  EXPECT_EQ(zero.worst_concave_margin, 0.0);
  EXPECT_EQ(zero.worst_convex_margin, 0.0);
}

TEST(Saddle, PerturbedFollowerResidualGrowsLinearly) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 13);
  auto s = solve_saddle_point(p, t, g);
  const TreeProcess bump = [&] {
    TreeProcess b = random_process(t, g.size(), 99);
    b.mask(p.masks[Region::D]);
    return b;
  }();
  // sizes relative to the saddle norm so that the normalization stays fixed
  const double xnorm = std::sqrt(space_time_norm_sq(t, g.h, s.psi1_star) +
                                 space_time_norm_sq(t, g.h, s.psi2_star) +
                                 space_time_norm_sq(t, g.h, s.v_star));
  const double unit = xnorm / std::sqrt(space_time_norm_sq(t, g.h, bump));
  std::vector<double> res;
  for (double size : {1e-3, 2e-3, 4e-3}) {
    SaddleSolution moved = s;
    moved.v_star.axpy(size * unit, bump);
    res.push_back(verify_first_order_conditions(p, moved, t, g, 2, 5).max_residual);
  }
  EXPECT_NEAR(res[1] / res[0], 2.0, 0.1);
  EXPECT_NEAR(res[2] / res[1], 2.0, 0.1);
}

TEST(Saddle, SelfConsistentCost) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 31);
  auto s = solve_saddle_point(p, t, g);
  const double direct = evaluate_robust_cost(s.y, s.v_star, s.psi1_star, s.psi2_star,
                                             p.targets, p.masks, p.game, t, g)
                            .total;
  const double resolved = robust_cost_at(p, s.psi1_star, s.psi2_star, s.v_star, t, g).total;
  EXPECT_NEAR(direct, resolved, 1e-12 * std::abs(direct));
}

TEST(Saddle, SmallPenaltiesFailValidation) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 3, 1e-4);
  auto check = check_large_parameters(p, t, g);
  EXPECT_FALSE(check.passed);
  EXPECT_THROW(solve_saddle_point(p, t, g), InvalidArgument);
  SaddleOptions opts;
  opts.check_contraction = false;
  opts.max_iter = 30;
  EXPECT_THROW(solve_saddle_point(p, t, g, opts), NonContraction);
  try {
    solve_saddle_point(p, t, g, opts);
  } catch (const NonContraction& e) {
    EXPECT_FALSE(e.trace().empty());
  }
}

TEST(Saddle, InvalidGameParameters) {
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(8);
  GameProblem p = random_game(t, g, 3);
  p.game.delta2 = 0.0;
  EXPECT_THROW(solve_saddle_point(p, t, g), InvalidArgument);
}
