#include "kslab/game.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/random.hpp"

namespace kslab {

void validate(const GameParams& game) {
  std::vector<std::string> bad;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) bad.push_back(std::string(name) + " must be > 0");
  };
  positive(game.beta, "beta");
  positive(game.delta1, "delta1");
  positive(game.delta2, "delta2");
  if (!bad.empty()) {
    std::string msg = "game parameters: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw InvalidArgument(msg);
  }
}

double CostReport::term(const std::string& name) const {
  for (const auto& [k, v] : terms)
    if (k == name) return v;
  throw InvalidArgument("cost report has no term " + name);
}

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

bool is_set(const TreeProcess& p) { return p.width() != 0; }

double norm_sq(const TreeProcess& p, const BinomialTree& tree, const Grid& grid,
               std::span<const double> weights = {}) {
  if (!is_set(p)) return 0.0;
  return space_time_norm_sq(tree, grid.h, p, weights);
}

TreeProcess zeros_like(const BinomialTree& tree, const Grid& grid) {
  return TreeProcess(tree, grid.size());
}

const TreeProcess* target_at(const Targets& t, int i) {
  const TreeProcess* p = i == 0 ? &t.y_d0 : i == 1 ? &t.y_d1 : &t.y_d2;
  return is_set(*p) ? p : nullptr;
}

// mask_i (D_i y - y_d^i) at every node.
TreeProcess tracking_residual(const TreeProcess& y, const Targets& targets,
                              const TrackingOperators& ops, const BinomialTree& tree,
                              int i) {
  const std::size_t n = y.width();
  TreeProcess r(tree, n);
  const auto& mask = i == 0 ? ops.m0 : i == 1 ? ops.m1 : ops.m2;
  const TreeProcess* yd = target_at(targets, i);
  for (std::size_t l = 0; l <= tree.depth(); ++l)
    for (std::size_t k = 0; k < BinomialTree::level_size(l); ++k) {
      auto out = r.node(l, k);
      auto yn = y.node(l, k);
      if (i == 0) {
        std::copy(yn.begin(), yn.end(), out.begin());
      } else {
        (i == 1 ? ops.d1 : ops.d2).apply(yn, out);
      }
      if (yd) {
        auto d = yd->node(l, k);
        for (std::size_t j = 0; j < n; ++j) out[j] -= d[j];
      }
      for (std::size_t j = 0; j < n; ++j) out[j] *= mask[j];
    }
  return r;
}

void check_shapes(const GameProblem& p, const BinomialTree& tree, const Grid& grid) {
  if (p.y0.size() != grid.size()) throw InvalidArgument("initial state size mismatch");
  for (const TreeProcess* q : {&p.f, &p.g, &p.targets.y_d0, &p.targets.y_d1,
                               &p.targets.y_d2}) {
    if (is_set(*q) && (q->depth() != tree.depth() || q->width() != grid.size())) {
      throw InvalidArgument("game data process does not match tree/grid");
    }
  }
}

// Forward sources of the game state: f chi_O + (1/delta1 - chi_D/beta) z and g + Z/delta2.
struct PicardState {
  TreeProcess z;
  TreeProcess Z;
};

void forward_sources(const GameProblem& p, const PicardState& s, const TreeProcess& f_fixed,
                     const TreeProcess& g_fixed, TreeProcess& F, TreeProcess& G) {
  const auto& chi_d = p.masks[Region::D];
  const std::size_t n = chi_d.size();
  std::vector<double> coef(n);
  for (std::size_t j = 0; j < n; ++j) coef[j] = 1.0 / p.game.delta1 - chi_d[j] / p.game.beta;
  F = s.z;
  F.mask(coef);
  F.axpy(1.0, f_fixed);
  G = s.Z;
  G.scale(1.0 / p.game.delta2);
  G.axpy(1.0, g_fixed);
}

double pair_norm(const TreeProcess& z, const TreeProcess& Z, const BinomialTree& tree,
                 const Grid& grid) {
  return std::sqrt(space_time_norm_sq(tree, grid.h, z) + space_time_norm_sq(tree, grid.h, Z));
}

struct FixedData {
  TreeProcess f_chi;
  TreeProcess g;
  TreeProcess yd_source;  // sum D_i^T M_i y_d^i
};

FixedData fixed_data(const GameProblem& p, const TrackingOperators& ops,
                     const BinomialTree& tree, const Grid& grid) {
  FixedData d{zeros_like(tree, grid), zeros_like(tree, grid),
              target_source(p.targets, ops, tree, grid.size())};
  if (is_set(p.f)) {
    d.f_chi = p.f;
    d.f_chi.mask(p.masks[Region::O]);
  }
  if (is_set(p.g)) d.g = p.g;
  return d;
}

// One application of the Picard map: (z, Z) -> adjoint of the state driven by them.
BackwardSolution picard_map(const SpdeContext& ctx, const GameProblem& p,
                            const TrackingOperators& ops, const FixedData& fixed,
                            const std::vector<double>& y0, const PicardState& s,
                            ForwardSolution* y_out = nullptr) {
  TreeProcess F, G;
  forward_sources(p, s, fixed.f_chi, fixed.g, F, G);
  TreeProcess y = forward_sweep(ctx, y0, &F, &G);
  // S = -K y + sum D_i^T M_i y_d^i
  TreeProcess S(ctx.tree(), y.width());
  for (std::size_t l = 0; l <= ctx.tree().depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      ops.normal.apply(y.node(l, i), S.node(l, i));
    }
  S.scale(-1.0);
  S.axpy(1.0, fixed.yd_source);
  TreeProcess terminal(ctx.tree(), y.width());
  if (y_out) y_out->y = std::move(y);
  return backward_sweep(ctx, terminal, &S);
}

}  // namespace

TrackingOperators build_tracking_operators(const Grid& grid, const RegionMask& masks) {
  TrackingOperators ops;
  ops.d1 = build_derivative_operator(grid, 1);
  ops.d2 = build_derivative_operator(grid, 2);
  ops.d1t = ops.d1.transpose();
  ops.d2t = ops.d2.transpose();
  ops.m0 = masks[Region::Od0];
  ops.m1 = masks[Region::Od1];
  ops.m2 = masks[Region::Od2];
  BandedOperator diag0(grid.size(), 0, 0);
  for (std::size_t j = 0; j < grid.size(); ++j) diag0.at(j, j) = ops.m0[j];
  ops.normal = diag0 + multiply(ops.d1t, scale_rows(ops.m1, ops.d1)) +
               multiply(ops.d2t, scale_rows(ops.m2, ops.d2));
  return ops;
}

TreeProcess tracking_source(const TreeProcess& y, const Targets& targets,
                            const TrackingOperators& ops, const BinomialTree& tree) {
  const std::size_t n = y.width();
  TreeProcess s(tree, n);
  std::vector<double> tmp(n);
  for (int i = 0; i < 3; ++i) {
    TreeProcess r = tracking_residual(y, targets, ops, tree, i);
    for (std::size_t l = 0; l <= tree.depth(); ++l)
      for (std::size_t k = 0; k < BinomialTree::level_size(l); ++k) {
        auto out = s.node(l, k);
        auto rn = r.node(l, k);
        if (i == 0) {
          for (std::size_t j = 0; j < n; ++j) out[j] -= rn[j];
        } else {
          (i == 1 ? ops.d1t : ops.d2t).apply(rn, tmp);
          for (std::size_t j = 0; j < n; ++j) out[j] -= tmp[j];
        }
      }
  }
  return s;
}

TreeProcess target_source(const Targets& targets, const TrackingOperators& ops,
                          const BinomialTree& tree, std::size_t width) {
  TreeProcess s(tree, width);
  std::vector<double> masked(width), tmp(width);
  for (int i = 0; i < 3; ++i) {
    const TreeProcess* yd = target_at(targets, i);
    if (!yd) continue;
    const auto& mask = i == 0 ? ops.m0 : i == 1 ? ops.m1 : ops.m2;
    for (std::size_t l = 0; l <= tree.depth(); ++l)
      for (std::size_t k = 0; k < BinomialTree::level_size(l); ++k) {
        auto d = yd->node(l, k);
        for (std::size_t j = 0; j < width; ++j) masked[j] = mask[j] * d[j];
        auto out = s.node(l, k);
        if (i == 0) {
          for (std::size_t j = 0; j < width; ++j) out[j] += masked[j];
        } else {
          (i == 1 ? ops.d1t : ops.d2t).apply(masked, tmp);
          for (std::size_t j = 0; j < width; ++j) out[j] += tmp[j];
        }
      }
  }
  return s;
}

CostReport evaluate_follower_cost(const ForwardSolution& y, const TreeProcess& v,
                                  const Targets& targets, const RegionMask& masks,
                                  double beta, const BinomialTree& tree, const Grid& grid) {
  const TrackingOperators ops = build_tracking_operators(grid, masks);
  CostReport rep;
  for (int i = 0; i < 3; ++i) {
    TreeProcess r = tracking_residual(y.y, targets, ops, tree, i);
    rep.terms.emplace_back("tracking" + std::to_string(i),
                           0.5 * space_time_norm_sq(tree, grid.h, r));
  }
  rep.terms.emplace_back("follower", 0.5 * beta * norm_sq(v, tree, grid, masks[Region::D]));
  for (const auto& [k, val] : rep.terms) rep.total += val;
  return rep;
}

CostReport evaluate_robust_cost(const ForwardSolution& y, const TreeProcess& v,
                                const TreeProcess& psi1, const TreeProcess& psi2,
                                const Targets& targets, const RegionMask& masks,
                                const GameParams& game, const BinomialTree& tree,
                                const Grid& grid) {
  CostReport rep = evaluate_follower_cost(y, v, targets, masks, game.beta, tree, grid);
  const double d1 = -0.5 * game.delta1 * norm_sq(psi1, tree, grid);
  const double d2 = -0.5 * game.delta2 * norm_sq(psi2, tree, grid);
  rep.terms.emplace_back("disturbance1", d1);
  rep.terms.emplace_back("disturbance2", d2);
  rep.total += d1 + d2;
  return rep;
}

CostReport evaluate_leader_cost(const TreeProcess& f, const TreeProcess& g,
                                const RegionMask& masks, const BinomialTree& tree,
                                const Grid& grid) {
  CostReport rep;
  rep.terms.emplace_back("f", 0.5 * norm_sq(f, tree, grid, masks[Region::O]));
  rep.terms.emplace_back("g", 0.5 * norm_sq(g, tree, grid));
  rep.total = rep.terms[0].second + rep.terms[1].second;
  return rep;
}

void characterize(const BackwardSolution& adjoint, const RegionMask& masks,
                  const GameParams& game, TreeProcess& psi1, TreeProcess& psi2,
                  TreeProcess& v) {
  psi1 = adjoint.z;
  psi1.scale(1.0 / game.delta1);
  psi2 = adjoint.Z;
  psi2.scale(1.0 / game.delta2);
  v = adjoint.z;
  v.mask(masks[Region::D]);
  v.scale(-1.0 / game.beta);
}

ForwardInputs game_forward_inputs(const GameProblem& problem, const TreeProcess& psi1,
                                  const TreeProcess& psi2, const TreeProcess& v) {
  ForwardInputs in;
  in.y0 = problem.y0;
  in.f = problem.f;
  in.g = problem.g;
  in.v = v;
  in.psi1 = psi1;
  in.psi2 = psi2;
  in.params = problem.params;
  in.masks = problem.masks;
  return in;
}

double contraction_estimate(const GameProblem& problem, const BinomialTree& tree,
                            const Grid& grid, std::size_t iterations, std::uint64_t seed) {
  validate(problem.game);
  const SpdeContext ctx(grid, tree, problem.params);
  const TrackingOperators ops = build_tracking_operators(grid, problem.masks);
  GameProblem homogeneous = problem;
  homogeneous.f = TreeProcess();
  homogeneous.g = TreeProcess();
  homogeneous.targets = Targets{};
  const FixedData fixed = fixed_data(homogeneous, ops, tree, grid);
  const std::vector<double> y0(grid.size(), 0.0);
  Rng rng(derive_seed(seed, "contraction"));
  PicardState s{zeros_like(tree, grid), zeros_like(tree, grid)};
  for (std::size_t l = 0; l < tree.depth(); ++l) {
    rng.fill_normal(s.z.level(l));
    rng.fill_normal(s.Z.level(l));
  }
  double norm = pair_norm(s.z, s.Z, tree, grid);
  double ratio = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    s.z.scale(1.0 / norm);
    s.Z.scale(1.0 / norm);
    BackwardSolution next = picard_map(ctx, homogeneous, ops, fixed, y0, s);
    s.z = std::move(next.z);
    s.Z = std::move(next.Z);
    norm = pair_norm(s.z, s.Z, tree, grid);
    ratio = norm;
    if (norm == 0.0) break;
  }
  return ratio;
}

LargeParameterCheck check_large_parameters(const GameProblem& problem,
                                           const BinomialTree& tree, const Grid& grid,
                                           double threshold) {
  LargeParameterCheck c;
  c.threshold = threshold;
  c.estimate = contraction_estimate(problem, tree, grid);
  c.passed = c.estimate < threshold;
  return c;
}

SaddleSolution solve_saddle_point(const GameProblem& problem, const BinomialTree& tree,
                                  const Grid& grid, const SaddleOptions& options) {
  validate(problem.game);
  check_shapes(problem, tree, grid);
  if (!(options.relaxation > 0.0 && options.relaxation <= 1.0)) {
    throw InvalidArgument("relaxation must be in (0, 1]");
  }
  if (options.check_contraction) {
    const auto check = check_large_parameters(problem, tree, grid,
                                              options.contraction_threshold);
    if (!check.passed) {
      std::ostringstream msg;
      msg << "large-parameter check failed: contraction estimate " << check.estimate
          << " >= " << check.threshold << " (increase beta, delta1, delta2)";
      throw InvalidArgument(msg.str());
    }
  }
  const SpdeContext ctx(grid, tree, problem.params);
  const TrackingOperators ops = build_tracking_operators(grid, problem.masks);
  const FixedData fixed = fixed_data(problem, ops, tree, grid);

  SaddleSolution sol;
  PicardState s{zeros_like(tree, grid), zeros_like(tree, grid)};
  double omega = options.relaxation;
  double prev = std::numeric_limits<double>::infinity();
  BackwardSolution next;
  bool converged = false;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    next = picard_map(ctx, problem, ops, fixed, problem.y0, s);
    TreeProcess dz = next.z, dZ = next.Z;
    dz.axpy(-1.0, s.z);
    dZ.axpy(-1.0, s.Z);
    const double diff = pair_norm(dz, dZ, tree, grid);
    const double scale = pair_norm(next.z, next.Z, tree, grid);
    const double rel = diff == 0.0 ? 0.0 : (scale > 0.0 ? diff / scale : diff);
    sol.trace.push_back(rel);
    sol.picard_iterations = it;
    sol.residual = rel;
    if (rel <= options.tol) {
      converged = true;
      break;
    }
    if (rel > prev && rel <= options.stall_floor) {
      converged = true;
      break;
    }
    if (rel > prev) {
      omega *= 0.5;
      if (omega < 1.0 / 1024.0) {
        throw NonContraction("saddle Picard iteration stalled at relative change " + sci(rel),
                             sol.trace);
      }
    }
    prev = rel;
    s.z.axpy(omega, dz);
    s.Z.axpy(omega, dZ);
  }
  if (!converged) {
    throw NonContraction("saddle Picard iteration reached max_iter = " +
                             std::to_string(options.max_iter) + " at relative change " +
                             std::to_string(sol.residual),
                         sol.trace);
  }
  sol.adjoint = std::move(next);
  characterize(sol.adjoint, problem.masks, problem.game, sol.psi1_star, sol.psi2_star,
               sol.v_star);
  PicardState final_state{sol.adjoint.z, sol.adjoint.Z};
  TreeProcess F, G;
  forward_sources(problem, final_state, fixed.f_chi, fixed.g, F, G);
  sol.y.y = forward_sweep(ctx, problem.y0, &F, &G);
  return sol;
}

CoupledSystem saddle_system(const GameProblem& problem, const BinomialTree& tree,
                            const Grid& grid) {
  const TrackingOperators ops = build_tracking_operators(grid, problem.masks);
  const FixedData fixed = fixed_data(problem, ops, tree, grid);
  CoupledSystem sys;
  FieldSpec y;
  y.kind = FieldKind::forward;
  y.initial = problem.y0;
  y.drift_data = fixed.f_chi;
  y.diffusion_data = fixed.g;
  FieldSpec z;
  z.kind = FieldKind::backward;
  z.source_data = fixed.yd_source;
  sys.fields = {y, z};
  const auto& chi_d = problem.masks[Region::D];
  std::vector<double> drift(grid.size()), diffusion(grid.size(), 1.0 / problem.game.delta2);
  for (std::size_t j = 0; j < grid.size(); ++j)
    drift[j] = 1.0 / problem.game.delta1 - chi_d[j] / problem.game.beta;
  sys.couplings.push_back({0, 1, Role::drift, Slot::value, diagonal_operator(drift)});
  sys.couplings.push_back({0, 1, Role::diffusion, Slot::martingale, diagonal_operator(diffusion)});
  sys.couplings.push_back({1, 0, Role::source, Slot::value, -1.0 * ops.normal});
  return sys;
}

SaddleSolution direct_assembly_solve(const GameProblem& problem, const BinomialTree& tree,
                                     const Grid& grid, double* assembly_residual) {
  validate(problem.game);
  check_shapes(problem, tree, grid);
  const SpdeContext ctx(grid, tree, problem.params);
  DirectSolveResult res = solve_coupled_direct(ctx, saddle_system(problem, tree, grid));
  if (assembly_residual) *assembly_residual = res.residual;
  SaddleSolution sol;
  sol.y.y = std::move(res.fields[0].value);
  sol.adjoint.z = std::move(res.fields[1].value);
  sol.adjoint.Z = std::move(res.fields[1].martingale);
  sol.adjoint.state = std::move(res.fields[1].state);
  characterize(sol.adjoint, problem.masks, problem.game, sol.psi1_star, sol.psi2_star,
               sol.v_star);
  sol.residual = res.residual;
  return sol;
}

CostReport robust_cost_at(const GameProblem& problem, const TreeProcess& psi1,
                          const TreeProcess& psi2, const TreeProcess& v,
                          const BinomialTree& tree, const Grid& grid) {
  const ForwardInputs in = game_forward_inputs(problem, psi1, psi2, v);
  const ForwardSolution y = forward_solve(in, tree, grid);
  return evaluate_robust_cost(y, v, psi1, psi2, problem.targets, problem.masks,
                              problem.game, tree, grid);
}

namespace {

TreeProcess random_direction(const BinomialTree& tree, const Grid& grid, Rng& rng,
                             const std::vector<double>* mask) {
  TreeProcess u(tree, grid.size());
  for (std::size_t l = 0; l < tree.depth(); ++l) rng.fill_normal(u.level(l));
  if (mask) u.mask(*mask);
  const double nrm = std::sqrt(space_time_norm_sq(tree, grid.h, u));
  if (nrm > 0.0) u.scale(1.0 / nrm);
  return u;
}

double saddle_norm(const SaddleSolution& s, const BinomialTree& tree, const Grid& grid) {
  return std::sqrt(space_time_norm_sq(tree, grid.h, s.psi1_star) +
                   space_time_norm_sq(tree, grid.h, s.psi2_star) +
                   space_time_norm_sq(tree, grid.h, s.v_star));
}

}  // namespace

FirstOrderReport verify_first_order_conditions(const GameProblem& problem,
                                               const SaddleSolution& saddle,
                                               const BinomialTree& tree, const Grid& grid,
                                               std::size_t n_directions, std::uint64_t seed,
                                               double step) {
  FirstOrderReport rep;
  Rng rng(derive_seed(seed, "first-order"));
  const double xnorm = saddle_norm(saddle, tree, grid);
  const double j0 =
      robust_cost_at(problem, saddle.psi1_star, saddle.psi2_star, saddle.v_star, tree, grid)
          .total;
  for (std::size_t k = 0; k < n_directions; ++k) {
    for (int comp = 0; comp < 3; ++comp) {
      const TreeProcess u =
          random_direction(tree, grid, rng, comp == 2 ? &problem.masks[Region::D] : nullptr);
      if (space_time_norm_sq(tree, grid.h, u) == 0.0) {
        rep.residuals.push_back(0.0);
        continue;
      }
      double j[2];
      for (int side = 0; side < 2; ++side) {
        TreeProcess p1 = saddle.psi1_star, p2 = saddle.psi2_star, v = saddle.v_star;
        TreeProcess& target = comp == 0 ? p1 : comp == 1 ? p2 : v;
        target.axpy(side == 0 ? step : -step, u);
        j[side] = robust_cost_at(problem, p1, p2, v, tree, grid).total;
      }
      const double slope = (j[0] - j[1]) / (2.0 * step);
      const double curvature = (j[0] - 2.0 * j0 + j[1]) / (step * step);
      const double denom = std::abs(curvature) * xnorm;
      const double r = denom > 0.0 ? std::abs(slope) / denom : std::abs(slope);
      rep.residuals.push_back(r);
      rep.max_residual = std::max(rep.max_residual, r);
    }
  }
  return rep;
}

SaddleMarginReport verify_saddle_inequalities(const GameProblem& problem,
                                              const SaddleSolution& saddle,
                                              const BinomialTree& tree, const Grid& grid,
                                              std::size_t n_samples, std::uint64_t seed,
                                              double scale) {
  SaddleMarginReport rep;
  rep.parameters_validated = check_large_parameters(problem, tree, grid).passed;
  Rng rng(derive_seed(seed, "saddle-margins"));
  const double xnorm = saddle_norm(saddle, tree, grid);
  const double size = xnorm > 0.0 ? scale * xnorm : scale;
  const double jstar =
      robust_cost_at(problem, saddle.psi1_star, saddle.psi2_star, saddle.v_star, tree, grid)
          .total;
  rep.worst_concave_margin = std::numeric_limits<double>::infinity();
  rep.worst_convex_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double a = rng.uniform(0.0, 1.0);
    TreeProcess p1 = saddle.psi1_star, p2 = saddle.psi2_star;
    p1.axpy(size * a, random_direction(tree, grid, rng, nullptr));
    p2.axpy(size * std::sqrt(1.0 - a * a), random_direction(tree, grid, rng, nullptr));
    const double concave =
        jstar - robust_cost_at(problem, p1, p2, saddle.v_star, tree, grid).total;
    TreeProcess v = saddle.v_star;
    v.axpy(size, random_direction(tree, grid, rng, &problem.masks[Region::D]));
    const double convex =
        robust_cost_at(problem, saddle.psi1_star, saddle.psi2_star, v, tree, grid).total -
        jstar;
    rep.worst_concave_margin = std::min(rep.worst_concave_margin, concave);
    rep.worst_convex_margin = std::min(rep.worst_convex_margin, convex);
    if (concave < 0.0) ++rep.violations;
    if (convex < 0.0) ++rep.violations;
    ++rep.samples;
  }
  if (n_samples == 0) {
    rep.worst_concave_margin = 0.0;
    rep.worst_convex_margin = 0.0;
  }
  return rep;
}

}  // namespace kslab
