#include "kslab/spde.hpp"

#include <cmath>
#include <string>

#include "kslab/errors.hpp"

namespace kslab {

namespace {

BandedOperator default_drift(const Grid& grid, const ModelParams& params,
                             const std::optional<BandedOperator>& drift) {
  if (drift) {
    if (drift->size() != grid.size()) {
      throw InvalidArgument("drift operator size " + std::to_string(drift->size()) +
                            " does not match grid size " + std::to_string(grid.size()));
    }
    return *drift;
  }
  return build_drift_operator(grid, params, Direction::forward);
}

ShiftedSystem factor_step(const BandedOperator& drift, double dt) {
  try {
    return ShiftedSystem(drift, dt);
  } catch (const IllConditioned& e) {
    throw IllConditioned(std::string("implicit step (I + dt L): ") + e.what(),
                         e.condition_estimate());
  }
}

bool is_set(const TreeProcess& p) { return p.width() != 0; }

void check_process(const TreeProcess& p, const BinomialTree& tree, const Grid& grid,
                   const char* name) {
  if (!is_set(p)) return;
  if (p.depth() != tree.depth() || p.width() != grid.size()) {
    throw InvalidArgument(std::string("process ") + name + " has shape (depth " +
                          std::to_string(p.depth()) + ", width " +
                          std::to_string(p.width()) + "), expected (" +
                          std::to_string(tree.depth()) + ", " +
                          std::to_string(grid.size()) + ")");
  }
}

void check_same_model(const ModelParams& a, const ModelParams& b) {
  if (a.k != b.k || a.eta != b.eta || a.T != b.T || !(a.a == b.a) || !(a.b == b.b)) {
    throw InvalidArgument("pairing check: forward and backward models differ");
  }
}

}  // namespace

SpdeContext::SpdeContext(const Grid& grid, const BinomialTree& tree,
                         const ModelParams& params, std::optional<BandedOperator> drift)
    : grid_(grid),
      tree_(tree),
      params_(params),
      drift_(default_drift(grid, params, drift)),
      implicit_(factor_step(drift_, tree.dt())) {
  validate(params);
  if (std::abs(tree.horizon() - params.T) > 1e-12 * params.T) {
    throw InvalidArgument("tree horizon does not match model horizon T");
  }
  a_.reserve(tree.depth() + 1);
  b_.reserve(tree.depth() + 1);
  for (std::size_t l = 0; l <= tree.depth(); ++l) {
    a_.push_back(params.a.sample(l, tree.depth(), grid));
    b_.push_back(params.b.sample(l, tree.depth(), grid));
  }
}

TreeProcess ForwardInputs::drift_source(const BinomialTree& tree, const Grid& grid) const {
  TreeProcess out(tree, grid.size());
  if (is_set(f)) {
    check_process(f, tree, grid, "f");
    TreeProcess part = f;
    part.mask(masks[Region::O]);
    out.axpy(1.0, part);
  }
  if (is_set(v)) {
    check_process(v, tree, grid, "v");
    TreeProcess part = v;
    part.mask(masks[Region::D]);
    out.axpy(1.0, part);
  }
  if (is_set(psi1)) {
    check_process(psi1, tree, grid, "psi1");
    out.axpy(1.0, psi1);
  }
  return out;
}

TreeProcess ForwardInputs::diffusion_source(const BinomialTree& tree,
                                            const Grid& grid) const {
  TreeProcess out(tree, grid.size());
  if (is_set(g)) {
    check_process(g, tree, grid, "g");
    out.axpy(1.0, g);
  }
  if (is_set(psi2)) {
    check_process(psi2, tree, grid, "psi2");
    out.axpy(1.0, psi2);
  }
  return out;
}

TreeProcess forward_sweep(const SpdeContext& ctx, const std::vector<double>& y0,
                          const TreeProcess* drift_source,
                          const TreeProcess* diffusion_source) {
  const auto& tree = ctx.tree();
  const std::size_t n = ctx.grid().size();
  if (y0.size() != n) {
    throw InvalidArgument("initial state has size " + std::to_string(y0.size()) +
                          ", grid has " + std::to_string(n));
  }
  const double dt = tree.dt();
  const double sdt = tree.sqrt_dt();
  TreeProcess y(tree, n);
  std::copy(y0.begin(), y0.end(), y.node(0, 0).begin());
  std::vector<double> base(n);
  std::vector<double> noise(n);
  for (std::size_t l = 0; l < tree.depth(); ++l) {
    const auto& a = ctx.a(l);
    const auto& b = ctx.b(l);
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto yn = y.node(l, i);
      for (std::size_t j = 0; j < n; ++j) {
        base[j] = yn[j] + dt * a[j] * yn[j];
        noise[j] = sdt * b[j] * yn[j];
      }
      if (drift_source) {
        auto F = drift_source->node(l, i);
        for (std::size_t j = 0; j < n; ++j) base[j] += dt * F[j];
      }
      if (diffusion_source) {
        auto G = diffusion_source->node(l, i);
        for (std::size_t j = 0; j < n; ++j) noise[j] += sdt * G[j];
      }
      auto up = y.node(l + 1, BinomialTree::up_child(i));
      auto dn = y.node(l + 1, BinomialTree::down_child(i));
      for (std::size_t j = 0; j < n; ++j) {
        up[j] = base[j] + noise[j];
        dn[j] = base[j] - noise[j];
      }
      ctx.implicit_step().solve(up);
      ctx.implicit_step().solve(dn);
    }
  }
  return y;
}

BackwardSolution backward_sweep(const SpdeContext& ctx, const TreeProcess& terminal,
                                const TreeProcess* source) {
  const auto& tree = ctx.tree();
  const std::size_t n = ctx.grid().size();
  const std::size_t N = tree.depth();
  if (terminal.depth() != N || terminal.width() != n) {
    throw InvalidArgument("terminal process shape does not match tree/grid");
  }
  const double dt = tree.dt();
  const double inv = 1.0 / (2.0 * tree.sqrt_dt());
  BackwardSolution out{TreeProcess(tree, n), TreeProcess(tree, n), TreeProcess(tree, n)};
  auto term = terminal.level(N);
  std::copy(term.begin(), term.end(), out.state.level(N).begin());
  std::copy(term.begin(), term.end(), out.z.level(N).begin());
  for (std::size_t l = N; l-- > 0;) {
    const auto& a = ctx.a(l);
    const auto& b = ctx.b(l);
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto up = out.state.node(l + 1, BinomialTree::up_child(i));
      auto dn = out.state.node(l + 1, BinomialTree::down_child(i));
      auto z = out.z.node(l, i);
      auto Z = out.Z.node(l, i);
      for (std::size_t j = 0; j < n; ++j) {
        z[j] = 0.5 * (up[j] + dn[j]);
        Z[j] = (up[j] - dn[j]) * inv;
      }
      ctx.implicit_step().solve_transpose(z);
      ctx.implicit_step().solve_transpose(Z);
      auto w = out.state.node(l, i);
      for (std::size_t j = 0; j < n; ++j) {
        w[j] = (1.0 + dt * a[j]) * z[j] + dt * b[j] * Z[j];
      }
      if (source) {
        auto S = source->node(l, i);
        for (std::size_t j = 0; j < n; ++j) w[j] -= dt * S[j];
      }
    }
  }
  return out;
}

ForwardSolution forward_solve(const ForwardInputs& inputs, const BinomialTree& tree,
                              const Grid& grid) {
  const SpdeContext ctx(grid, tree, inputs.params, inputs.drift);
  const TreeProcess F = inputs.drift_source(tree, grid);
  const TreeProcess G = inputs.diffusion_source(tree, grid);
  return {forward_sweep(ctx, inputs.y0, &F, &G)};
}

BackwardSolution backward_solve(const BackwardInputs& inputs, const BinomialTree& tree,
                                const Grid& grid) {
  const SpdeContext ctx(grid, tree, inputs.params, inputs.drift);
  check_process(inputs.source, tree, grid, "source");
  return backward_sweep(ctx, inputs.terminal,
                        is_set(inputs.source) ? &inputs.source : nullptr);
}

PairingReport ito_pairing_check(const ForwardInputs& fwd_inputs,
                                const ForwardSolution& fwd,
                                const BackwardInputs& bwd_inputs,
                                const BackwardSolution& bwd,
                                const BinomialTree& tree, const Grid& grid) {
  check_same_model(fwd_inputs.params, bwd_inputs.params);
  if (fwd_inputs.drift.has_value() != bwd_inputs.drift.has_value()) {
    throw InvalidArgument("pairing check: forward and backward drifts differ");
  }
  for (const TreeProcess* p : {&fwd.y, &bwd.state, &bwd.z, &bwd.Z}) {
    if (p->depth() != tree.depth() || p->width() != grid.size()) {
      throw InvalidArgument("pairing check: solution shape does not match tree/grid");
    }
  }
  const double h = grid.h;
  const std::size_t N = tree.depth();
  PairingReport r;
  r.lhs = level_inner(h, fwd.y, bwd.state, N) - level_inner(h, fwd.y, bwd.state, 0);
  const TreeProcess F = fwd_inputs.drift_source(tree, grid);
  const TreeProcess G = fwd_inputs.diffusion_source(tree, grid);
  r.rhs = space_time_inner(tree, h, F, bwd.z) + space_time_inner(tree, h, G, bwd.Z);
  if (is_set(bwd_inputs.source)) {
    check_process(bwd_inputs.source, tree, grid, "source");
    r.rhs += space_time_inner(tree, h, fwd.y, bwd_inputs.source);
  }
  r.residual = std::abs(r.lhs - r.rhs) / (1.0 + std::abs(r.lhs));
  return r;
}

EnergyReport energy_report(const ForwardInputs& inputs, const ForwardSolution& fwd,
                           const BinomialTree& tree, const Grid& grid) {
  const double h = grid.h;
  EnergyReport r;
  for (std::size_t l = 0; l <= tree.depth(); ++l) {
    r.max_mean_square = std::max(r.max_mean_square, level_inner(h, fwd.y, fwd.y, l));
  }
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  TreeProcess yxx(tree, grid.size());
  for (std::size_t l = 1; l <= tree.depth(); ++l) {
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      d2.apply(fwd.y.node(l, i), yxx.node(l, i));
    }
    r.h2_integral += tree.dt() * level_inner(h, yxx, yxx, l);
  }
  r.data_norm = grid_dot(grid, inputs.y0, inputs.y0);
  const std::vector<std::pair<const TreeProcess*, const std::vector<double>*>> parts = {
      {&inputs.f, inputs.masks.has(Region::O) ? &inputs.masks[Region::O] : nullptr},
      {&inputs.g, nullptr},
      {&inputs.v, inputs.masks.has(Region::D) ? &inputs.masks[Region::D] : nullptr},
      {&inputs.psi1, nullptr},
      {&inputs.psi2, nullptr}};
  for (const auto& [p, mask] : parts) {
    if (!is_set(*p)) continue;
    if (mask) {
      r.data_norm += space_time_norm_sq(tree, h, *p, *mask);
    } else {
      r.data_norm += space_time_norm_sq(tree, h, *p);
    }
  }
  r.ratio = r.data_norm > 0.0 ? (r.max_mean_square + r.h2_integral) / r.data_norm : 0.0;
  return r;
}

}  // namespace kslab
