#include <gtest/gtest.h>

#include "kslab/assembly.hpp"
#include "kslab/errors.hpp"
#include "game_fixtures.hpp"

using namespace kslab;
using namespace kslab::testing;

TEST(Assembly, SingleForwardFieldMatchesSweep) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(10);
  SpdeContext ctx(g, t, varied_model());
  CoupledSystem sys;
  FieldSpec y;
  y.initial = random_vector(g.size(), 1);
  y.drift_data = random_process(t, g.size(), 2);
  y.diffusion_data = random_process(t, g.size(), 3);
  sys.fields = {y};
  auto res = solve_coupled_direct(ctx, sys);
  EXPECT_LE(res.residual, 1e-12);
  auto ref = forward_sweep(ctx, y.initial, &y.drift_data, &y.diffusion_data);
  EXPECT_LE(relative_difference(res.fields[0].value, ref, t, g.h), 1e-12);
}

TEST(Assembly, SingleBackwardFieldMatchesSweep) {
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(10);
  SpdeContext ctx(g, t, varied_model());
  CoupledSystem sys;
  FieldSpec z;
  z.kind = FieldKind::backward;
  z.terminal_data = random_process(t, g.size(), 4);
  z.source_data = random_process(t, g.size(), 5);
  sys.fields = {z};
  auto res = solve_coupled_direct(ctx, sys);
  auto ref = backward_sweep(ctx, z.terminal_data, &z.source_data);
  EXPECT_LE(relative_difference(res.fields[0].value, ref.z, t, g.h), 1e-11);
  EXPECT_LE(relative_difference(res.fields[0].martingale, ref.Z, t, g.h), 1e-11);
  EXPECT_LE(relative_difference(res.fields[0].state, ref.state, t, g.h), 1e-11);
}

TEST(Assembly, TerminalCouplingReadsForwardLeaves) {
  // z(T) = 2 y(T) with y uncoupled: same as backward sweep of 2 y_N.
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(9);
  SpdeContext ctx(g, t, varied_model());
  CoupledSystem sys;
  FieldSpec y;
  y.initial = random_vector(g.size(), 6);
  y.diffusion_data = random_process(t, g.size(), 7);
  FieldSpec z;
  z.kind = FieldKind::backward;
  sys.fields = {y, z};
  sys.couplings.push_back(
      {1, 0, Role::terminal, Slot::value, diagonal_operator(std::vector<double>(g.size(), 2.0))});
  auto res = solve_coupled_direct(ctx, sys);
  TreeProcess yt = forward_sweep(ctx, y.initial, nullptr, &y.diffusion_data);
  yt.scale(2.0);
  auto ref = backward_sweep(ctx, yt, nullptr);
  EXPECT_LE(relative_difference(res.fields[1].value, ref.z, t, g.h), 1e-11);
}

TEST(Assembly, Guards) {
  BinomialTree t = build_tree(3, 1.0);
  Grid g = build_grid(9);
  SpdeContext ctx(g, t, varied_model());
  CoupledSystem sys;
  FieldSpec y;
  sys.fields = {y};
  sys.couplings.push_back({0, 0, Role::source, Slot::value, diagonal_operator(std::vector<double>(g.size(), 1.0))});
  EXPECT_THROW(solve_coupled_direct(ctx, sys), InvalidArgument);
  sys.couplings = {{0, 3, Role::drift, Slot::value, diagonal_operator(std::vector<double>(g.size(), 1.0))}};
  EXPECT_THROW(solve_coupled_direct(ctx, sys), InvalidArgument);
  BinomialTree big = build_tree(14, 1.0);
  Grid wide = build_grid(16);
  SpdeContext bctx(wide, big, varied_model());
  CoupledSystem one;
  one.fields = {FieldSpec{}};
  EXPECT_THROW(solve_coupled_direct(bctx, one), InvalidArgument);
}
